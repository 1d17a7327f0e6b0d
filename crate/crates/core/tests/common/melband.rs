//! Independent mel-band oracle: the HTK triangle formula evaluated at a
//! single frequency.

use std::f64::consts::PI;

use avattrib::datapipe::mel::{CLIP_SAMPLES, N_MELS, SAMPLE_RATE};

pub fn tone(freq: f64) -> Vec<f32> {
    (0..CLIP_SAMPLES)
        .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / f64::from(SAMPLE_RATE)).sin()) as f32)
        .collect()
}

/// Band whose triangular response peaks closest to `freq` on the HTK mel
/// scale.
pub fn oracle_band(freq: f64) -> usize {
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let top = mel(f64::from(SAMPLE_RATE) / 2.0);
    let edge = |i: usize| top * i as f64 / (N_MELS + 1) as f64;
    let m = mel(freq);
    (0..N_MELS)
        .map(|b| {
            let (lo, c, hi) = (edge(b), edge(b + 1), edge(b + 2));
            let w = if m <= c { (m - lo) / (c - lo) } else { (hi - m) / (hi - c) };
            (b, w)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

/// Mel band holding the most energy of a `[N_MELS, frames]` spectrogram.
pub fn energy_argmax(m: &[f32], frames: usize) -> usize {
    let energy: Vec<f64> = (0..N_MELS)
        .map(|b| m[b * frames..(b + 1) * frames].iter().map(|&v| f64::from(v)).sum())
        .collect();
    (0..N_MELS).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap()
}
