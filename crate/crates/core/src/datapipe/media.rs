//! Cached media: flat float32 payloads with a json sidecar header, and the
//! pluggable reader that decodes them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::datapipe::mel::{self, MelExtractor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Frames,
    Mel,
    Waveform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub kind: MediaKind,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Per-channel normalization to apply at load time (frames only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_mean: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_std: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
}

pub const DTYPE: &str = "float32-le";

impl CacheHeader {
    pub fn new(kind: MediaKind, shape: Vec<usize>) -> Self {
        Self {
            kind,
            shape,
            dtype: DTYPE.to_string(),
            channel_mean: None,
            channel_std: None,
            sample_rate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_cached(path: &Path, header: &CacheHeader, data: &[f32]) -> Result<()> {
    if header.len() != data.len() {
        return Err(Error::Shape(format!(
            "header shape {:?} holds {} values, payload has {}",
            header.shape,
            header.len(),
            data.len()
        )));
    }
    binio::write_f32(path, data)?;
    binio::write_json(&header_path(path), header)
}

pub fn read_cached(path: &Path) -> Result<(CacheHeader, Vec<f32>)> {
    let header: CacheHeader = binio::read_json(&header_path(path))?;
    if header.dtype != DTYPE {
        return Err(Error::Media {
            path: path.into(),
            reason: format!("unsupported dtype {}", header.dtype),
        });
    }
    let data = binio::read_f32(path)?;
    if data.len() != header.len() {
        return Err(Error::Media {
            path: path.into(),
            reason: format!(
                "payload has {} values, header shape {:?} needs {}",
                data.len(),
                header.shape,
                header.len()
            ),
        });
    }
    Ok((header, data))
}

/// Decoded frames of one clip, `[frames, 3, size, size]`, values in [0, 1].
#[derive(Debug, Clone)]
pub struct FrameClip {
    pub frames: usize,
    pub size: usize,
    pub data: Vec<f32>,
    pub channel_mean: Option<Vec<f32>>,
    pub channel_std: Option<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub enum AudioTrack {
    /// Ready `[1, 128, 128]` spectrogram in [-1, 1].
    Mel(Vec<f32>),
    Waveform { samples: Vec<f32>, sample_rate: u32 },
}

impl AudioTrack {
    pub fn into_mel(self, extractor: &MelExtractor) -> Result<Vec<f32>> {
        match self {
            AudioTrack::Mel(m) => Ok(m),
            AudioTrack::Waveform {
                samples,
                sample_rate,
            } => extractor.compute(&samples, sample_rate),
        }
    }
}

/// Decoding backend. Implement this to feed other containers or codecs.
pub trait MediaReader: Send + Sync {
    fn read_frames(&self, path: &Path) -> Result<FrameClip>;
    fn read_audio(&self, path: &Path) -> Result<AudioTrack>;
}

/// Reads the flat float32 cache format.
#[derive(Debug, Default, Clone, Copy)]
pub struct CachedReader;

impl MediaReader for CachedReader {
    fn read_frames(&self, path: &Path) -> Result<FrameClip> {
        let (header, data) = read_cached(path)?;
        match (header.kind, header.shape.as_slice()) {
            (MediaKind::Frames, &[n, 3, h, w]) if h == w && n > 0 => Ok(FrameClip {
                frames: n,
                size: h,
                data,
                channel_mean: header.channel_mean,
                channel_std: header.channel_std,
            }),
            (kind, shape) => Err(Error::Media {
                path: path.into(),
                reason: format!("expected frames [n, 3, s, s], found {kind:?} {shape:?}"),
            }),
        }
    }

    fn read_audio(&self, path: &Path) -> Result<AudioTrack> {
        let (header, data) = read_cached(path)?;
        match (header.kind, header.shape.as_slice()) {
            (MediaKind::Mel, &[1, mel::N_MELS, mel::N_FRAMES]) => Ok(AudioTrack::Mel(data)),
            (MediaKind::Waveform, &[_]) => Ok(AudioTrack::Waveform {
                samples: data,
                sample_rate: header.sample_rate.unwrap_or(mel::SAMPLE_RATE),
            }),
            (kind, shape) => Err(Error::Media {
                path: path.into(),
                reason: format!("expected mel [1, 128, 128] or waveform [n], found {kind:?} {shape:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_and_shape_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip.frames.f32");
        let data: Vec<f32> = (0..2 * 3 * 4 * 4).map(|i| i as f32 / 96.0).collect();
        write_cached(&p, &CacheHeader::new(MediaKind::Frames, vec![2, 3, 4, 4]), &data).unwrap();
        let clip = CachedReader.read_frames(&p).unwrap();
        assert_eq!((clip.frames, clip.size), (2, 4));
        assert_eq!(clip.data, data);
        assert!(CachedReader.read_audio(&p).is_err());
        assert!(write_cached(&p, &CacheHeader::new(MediaKind::Frames, vec![1, 3, 4, 4]), &data).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mel.f32");
        write_cached(&p, &CacheHeader::new(MediaKind::Mel, vec![1, 128, 128]), &mel::silence()).unwrap();
        binio::write_f32(&p, &[0.0; 10]).unwrap();
        assert!(matches!(CachedReader.read_audio(&p), Err(Error::Media { .. })));
    }
}
