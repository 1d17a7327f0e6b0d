//! Manifests, media caches, the mel front-end, clip loading and the synthetic
//! fingerprint dataset.

pub mod manifest;
pub mod media;
pub mod mel;
pub mod sample;
pub mod sampler;
pub mod synth;

pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use media::{AudioTrack, CachedReader, FrameClip, MediaReader};
pub use mel::{compute_mel, MelExtractor};
pub use sample::{load_sample, AugmentConfig, AugmentPlan, DataConfig, Sample};
pub use sampler::{make_weighted_sampler, WeightedSampler};
pub use synth::{generate_synthetic, SynthConfig};
