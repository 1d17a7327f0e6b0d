//! Clip loading: uniform frame sampling, clip-consistent augmentation and
//! per-channel normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::manifest::{DatasetManifest, ManifestEntry};
use crate::datapipe::media::{FrameClip, MediaReader};
use crate::datapipe::mel::{self, MelExtractor};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// One clip ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[T, 3, S, S]`, normalized.
    pub frames: Vec<f32>,
    /// `[1, 128, 128]` in [-1, 1].
    pub mel: Vec<f32>,
    pub y: u8,
    pub g: u32,
    pub source_id: String,
    pub num_frames: usize,
    pub frame_size: usize,
}

impl Sample {
    pub fn frame_len(&self) -> usize {
        3 * self.frame_size * self.frame_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub jitter_prob: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub grayscale_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            jitter_prob: 0.8,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
            grayscale_prob: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            flip_prob: 0.0,
            jitter_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            grayscale_prob: 0.0,
        }
    }

    /// Draws one plan; a plan is applied to every frame of a clip.
    pub fn draw(&self, rng: &mut StreamRng) -> AugmentPlan {
        let factor = |spread: f64, rng: &mut StreamRng| {
            if spread > 0.0 {
                rng.random_range(1.0 - spread..=1.0 + spread)
            } else {
                1.0
            }
        };
        let flip = rng.random_bool(self.flip_prob);
        let jitter = if rng.random_bool(self.jitter_prob) {
            let b = factor(self.brightness, rng);
            let c = factor(self.contrast, rng);
            let s = factor(self.saturation, rng);
            Some(ColorJitter {
                brightness: b as f32,
                contrast: c as f32,
                saturation: s as f32,
            })
        } else {
            None
        };
        let grayscale = rng.random_bool(self.grayscale_prob);
        AugmentPlan {
            flip,
            jitter,
            grayscale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorJitter {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentPlan {
    pub flip: bool,
    pub jitter: Option<ColorJitter>,
    pub grayscale: bool,
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

impl AugmentPlan {
    /// Applies the plan in place to `[n, 3, s, s]` frames with values in [0, 1].
    pub fn apply(&self, frames: &mut [f32], size: usize) {
        let plane = size * size;
        let frame_len = 3 * plane;
        if self.flip {
            for row in frames.chunks_exact_mut(size) {
                row.reverse();
            }
        }
        if let Some(j) = self.jitter {
            for v in frames.iter_mut() {
                *v = (*v * j.brightness).clamp(0.0, 1.0);
            }
            let n = frames.len() / frame_len;
            let mut mean_gray = 0f64;
            for f in frames.chunks_exact(frame_len) {
                for p in 0..plane {
                    mean_gray += f64::from(luma(f[p], f[plane + p], f[2 * plane + p]));
                }
            }
            let mean_gray = (mean_gray / (n * plane).max(1) as f64) as f32;
            for v in frames.iter_mut() {
                *v = ((*v - mean_gray) * j.contrast + mean_gray).clamp(0.0, 1.0);
            }
            for f in frames.chunks_exact_mut(frame_len) {
                for p in 0..plane {
                    let gray = luma(f[p], f[plane + p], f[2 * plane + p]);
                    for c in 0..3 {
                        let v = &mut f[c * plane + p];
                        *v = ((*v - gray) * j.saturation + gray).clamp(0.0, 1.0);
                    }
                }
            }
        }
        if self.grayscale {
            for f in frames.chunks_exact_mut(frame_len) {
                for p in 0..plane {
                    let gray = luma(f[p], f[plane + p], f[2 * plane + p]);
                    for c in 0..3 {
                        f[c * plane + p] = gray;
                    }
                }
            }
        }
    }
}

/// Geometry, normalization and augmentation for loading clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Frames per clip `T`.
    pub frames: usize,
    /// Square frame side `S` in pixels.
    pub frame_size: usize,
    pub channel_mean: [f32; 3],
    pub channel_std: [f32; 3],
    pub augment: AugmentConfig,
}

impl DataConfig {
    pub fn desk() -> Self {
        Self {
            frames: 8,
            frame_size: 64,
            channel_mean: [0.485, 0.456, 0.406],
            channel_std: [0.229, 0.224, 0.225],
            augment: AugmentConfig::default(),
        }
    }

    pub fn paper() -> Self {
        Self {
            frames: 16,
            frame_size: 224,
            ..Self::desk()
        }
    }
}

/// Picks `count` indices with a uniform stride over `available` frames.
pub fn frame_indices(available: usize, count: usize) -> Vec<usize> {
    (0..count).map(|t| t * available / count).collect()
}

/// Loads one manifest entry. `augment` carries the clip's augmentation
/// stream; `None` disables augmentation.
pub fn load_sample(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    config: &DataConfig,
    reader: &dyn MediaReader,
    extractor: &MelExtractor,
    augment: Option<&mut StreamRng>,
) -> Result<Sample> {
    let clip = reader.read_frames(&manifest.resolve(&entry.video_path))?;
    if clip.size != config.frame_size {
        return Err(Error::Shape(format!(
            "{}: frames are {}px, configured for {}px",
            entry.source_id, clip.size, config.frame_size
        )));
    }
    let mel = match &entry.audio_path {
        Some(p) => reader.read_audio(&manifest.resolve(p))?.into_mel(extractor)?,
        None => mel::silence(),
    };
    if mel.len() != mel::N_MELS * mel::N_FRAMES {
        return Err(Error::Shape(format!(
            "{}: mel has {} values, expected {}",
            entry.source_id,
            mel.len(),
            mel::N_MELS * mel::N_FRAMES
        )));
    }
    let mut frames = select_frames(&clip, config.frames);
    if let Some(rng) = augment {
        config.augment.draw(rng).apply(&mut frames, clip.size);
    }
    let mean = clip.channel_mean.as_deref().unwrap_or(&config.channel_mean);
    let std = clip.channel_std.as_deref().unwrap_or(&config.channel_std);
    normalize(&mut frames, clip.size, mean, std);
    Ok(Sample {
        frames,
        mel,
        y: entry.y,
        g: entry.g,
        source_id: entry.source_id.clone(),
        num_frames: config.frames,
        frame_size: clip.size,
    })
}

fn select_frames(clip: &FrameClip, count: usize) -> Vec<f32> {
    let frame_len = 3 * clip.size * clip.size;
    let mut out = Vec::with_capacity(count * frame_len);
    for i in frame_indices(clip.frames, count) {
        out.extend_from_slice(&clip.data[i * frame_len..(i + 1) * frame_len]);
    }
    out
}

fn normalize(frames: &mut [f32], size: usize, mean: &[f32], std: &[f32]) {
    let plane = size * size;
    for f in frames.chunks_exact_mut(3 * plane) {
        for (c, ch) in f.chunks_exact_mut(plane).enumerate() {
            for v in ch {
                *v = (*v - mean[c]) / std[c];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn frame_indices_are_uniform() {
        assert_eq!(frame_indices(16, 8), vec![0, 2, 4, 6, 8, 10, 12, 14]);
        assert_eq!(frame_indices(8, 8), (0..8).collect::<Vec<_>>());
        assert_eq!(frame_indices(2, 4), vec![0, 0, 1, 1]);
    }

    #[test]
    fn flip_mirrors_columns() {
        let size = 5;
        let orig: Vec<f32> = (0..2 * 3 * size * size).map(|i| i as f32 / 150.0).collect();
        let mut flipped = orig.clone();
        AugmentPlan {
            flip: true,
            ..Default::default()
        }
        .apply(&mut flipped, size);
        for t in 0..2 {
            for c in 0..3 {
                for i in 0..size {
                    for j in 0..size {
                        let at = |jj: usize| ((t * 3 + c) * size + i) * size + jj;
                        assert_eq!(flipped[at(j)], orig[at(size - 1 - j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn jitter_and_grayscale_stay_in_range() {
        let size = 4;
        let mut r = rng::stream(1, "t", &[]);
        let orig: Vec<f32> = (0..3 * 3 * size * size).map(|_| r.random()).collect();
        let cfg = AugmentConfig {
            jitter_prob: 1.0,
            grayscale_prob: 1.0,
            brightness: 0.5,
            ..AugmentConfig::default()
        };
        let mut x = orig.clone();
        cfg.draw(&mut r).apply(&mut x, size);
        assert_eq!(x.len(), orig.len());
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        let plane = size * size;
        for f in x.chunks_exact(3 * plane) {
            assert_eq!(&f[..plane], &f[plane..2 * plane]);
        }
    }
}
