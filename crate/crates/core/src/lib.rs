//! Attribution-guided audio-visual deepfake detection.
//!
//! A visual stream (per-frame residual backbone, temporal self-attention,
//! mean pooling) and an audio stream (single-channel residual backbone over a
//! log-mel spectrogram) are fused by bidirectional cross-modal attention. A
//! detection head and a generator attribution head read the fused embedding,
//! trained jointly with focal, cross-entropy, cross-modal contrastive,
//! within-generator fingerprint consistency and centroid losses.

pub mod binio;
pub mod config;
pub mod datapipe;
pub mod encoders;
pub mod error;
pub mod evalkit;
pub mod fusion;
pub mod losses;
pub mod model;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use config::{Ablation, EvalConfig, Preset, RunConfig, TrainConfig};
pub use error::{Error, Result};
