//! Log-mel front-end: 4 s of 16 kHz audio to a 1x128x128 spectrogram in [-1, 1].

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const CLIP_SAMPLES: usize = 64_000;
pub const N_FFT: usize = 1024;
pub const HOP: usize = 512;
pub const N_MELS: usize = 128;
pub const N_FRAMES: usize = 128;
pub const TOP_DB: f64 = 80.0;
const AMIN: f64 = 1e-10;

/// Number of STFT frames for `n` samples with centered (n_fft/2 padded) framing.
pub fn stft_frame_count(n: usize) -> usize {
    1 + n / HOP
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank on the HTK mel scale between 0 Hz and Nyquist,
/// unnormalized. Returned as `n_mels` rows of `n_fft/2 + 1` weights.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize) -> Vec<Vec<f64>> {
    let n_freqs = n_fft / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * nyquist / (n_freqs - 1) as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
            (0..n_freqs)
                .map(|k| {
                    let f = bin_hz(k);
                    let up = (f - lo) / (center - lo);
                    let down = (hi - f) / (hi - center);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Reusable extractor; holds the FFT plan, window and filterbank.
pub struct MelExtractor {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
}

impl Default for MelExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl MelExtractor {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        // periodic Hann
        let window = (0..N_FFT)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / N_FFT as f64).cos())
            .collect();
        Self {
            fft,
            window,
            filters: mel_filterbank(SAMPLE_RATE, N_FFT, N_MELS),
        }
    }

    /// Returns the spectrogram as `N_MELS` rows of `N_FRAMES` values, flattened
    /// row-major (mel bin major, time minor), i.e. the `[1, 128, 128]` layout.
    pub fn compute(&self, waveform: &[f32], sample_rate: u32) -> Result<Vec<f32>> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::InvalidArgument(format!(
                "mel front-end expects {SAMPLE_RATE} Hz audio, got {sample_rate} Hz"
            )));
        }
        if let Some(i) = waveform.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "waveform sample {i} ({})",
                waveform[i]
            )));
        }
        if waveform.is_empty() {
            log::warn!("empty waveform, emitting silent spectrogram");
            return Ok(silence());
        }
        let clip = fit_length(waveform);
        let power = self.power_mel(&clip);
        let max = power.iter().flatten().fold(0f64, |a, &b| a.max(b));
        if max <= AMIN {
            return Ok(silence());
        }
        let reference = 10.0 * max.log10();
        let normalized: Vec<Vec<f64>> = power
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .map(|&p| {
                        let db = (10.0 * p.max(AMIN).log10() - reference).max(-TOP_DB);
                        db / (TOP_DB / 2.0) + 1.0
                    })
                    .collect()
            })
            .collect();
        Ok(resample_time(&normalized))
    }

    /// Mel power per STFT frame: `frames x N_MELS`.
    fn power_mel(&self, clip: &[f64]) -> Vec<Vec<f64>> {
        let pad = N_FFT / 2;
        let padded = reflect_pad(clip, pad);
        let n_frames = stft_frame_count(clip.len());
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        (0..n_frames)
            .map(|t| {
                let start = t * HOP;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex::new(padded[start + i] * self.window[i], 0.0);
                }
                self.fft.process(&mut buf);
                let spec: Vec<f64> = buf[..N_FFT / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
                self.filters
                    .iter()
                    .map(|w| w.iter().zip(&spec).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }
}

/// Convenience wrapper around a fresh [`MelExtractor`].
pub fn compute_mel(waveform: &[f32], sample_rate: u32) -> Result<Vec<f32>> {
    MelExtractor::new().compute(waveform, sample_rate)
}

/// Spectrogram of a silent clip: constant -1.
pub fn silence() -> Vec<f32> {
    vec![-1.0; N_MELS * N_FRAMES]
}

/// Zero-pads short input at the end, center-crops long input.
fn fit_length(waveform: &[f32]) -> Vec<f64> {
    let mut out = vec![0.0; CLIP_SAMPLES];
    if waveform.len() >= CLIP_SAMPLES {
        let off = (waveform.len() - CLIP_SAMPLES) / 2;
        for (o, &x) in out.iter_mut().zip(&waveform[off..off + CLIP_SAMPLES]) {
            *o = f64::from(x);
        }
    } else {
        for (o, &x) in out.iter_mut().zip(waveform) {
            *o = f64::from(x);
        }
    }
    out
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

/// Linear interpolation of `frames x N_MELS` onto `N_FRAMES` time steps with
/// aligned endpoints, transposed to mel-major layout.
fn resample_time(frames: &[Vec<f64>]) -> Vec<f32> {
    let src = frames.len();
    let mut out = vec![0f32; N_MELS * N_FRAMES];
    for j in 0..N_FRAMES {
        let pos = j as f64 * (src - 1) as f64 / (N_FRAMES - 1) as f64;
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(src - 1);
        let frac = pos - i0 as f64;
        for m in 0..N_MELS {
            let v = frames[i0][m] * (1.0 - frac) + frames[i1][m] * frac;
            out[m * N_FRAMES + j] = v.clamp(-1.0, 1.0) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, amp: f64) -> Vec<f32> {
        (0..CLIP_SAMPLES)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / f64::from(SAMPLE_RATE)).sin()) as f32)
            .collect()
    }

    #[test]
    fn frame_count_matches_enumeration() {
        // Enumerate window start positions over the padded signal.
        let padded = CLIP_SAMPLES + N_FFT;
        let enumerated = (0..).map(|t| t * HOP).take_while(|s| s + N_FFT <= padded).count();
        assert_eq!(enumerated, 126);
        assert_eq!(stft_frame_count(CLIP_SAMPLES), 126);
    }

    #[test]
    fn silence_and_empty_inputs_map_to_minus_one() {
        let ex = MelExtractor::new();
        let zeros = ex.compute(&vec![0.0; CLIP_SAMPLES], SAMPLE_RATE).unwrap();
        assert!(zeros.iter().all(|&v| v == -1.0));
        let empty = ex.compute(&[], SAMPLE_RATE).unwrap();
        assert_eq!(empty.len(), N_MELS * N_FRAMES);
        assert!(empty.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn rejects_non_finite_and_wrong_rate() {
        let mut w = vec![0.0; 100];
        w[42] = f32::NAN;
        assert!(matches!(compute_mel(&w, SAMPLE_RATE), Err(Error::NonFinite(_))));
        assert!(matches!(
            compute_mel(&[0.0; 10], 44_100),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn length_handling() {
        let ex = MelExtractor::new();
        let short = ex.compute(&tone(440.0, 0.5)[..20_000], SAMPLE_RATE).unwrap();
        let long: Vec<f32> = tone(440.0, 0.5).into_iter().cycle().take(90_000).collect();
        let long = ex.compute(&long, SAMPLE_RATE).unwrap();
        for m in [&short, &long] {
            assert_eq!(m.len(), N_MELS * N_FRAMES);
            assert!(m.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        // the zero-padded tail of the short clip is at the floor
        assert!(short[10 * N_FRAMES + 127] == -1.0);
    }

    #[test]
    fn output_reaches_top_of_range() {
        let m = compute_mel(&tone(1000.0, 0.3), SAMPLE_RATE).unwrap();
        let max = m.iter().cloned().fold(f32::MIN, f32::max);
        assert!((max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let w = tone(733.0, 0.2);
        let a = compute_mel(&w, SAMPLE_RATE).unwrap();
        let b = compute_mel(&w, SAMPLE_RATE).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
