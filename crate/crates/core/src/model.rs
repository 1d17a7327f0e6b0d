//! The complete two-stream network and its batched forward pass.

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::datapipe::{mel, Sample};
use crate::encoders::{AudioEncoder, EncoderConfig, VisualEncoder};
use crate::error::{Error, Result};
use crate::fusion::{fuse, AttributionHead, CrossModalAttention, DetectionHead, HeadOutputs, ProjectionHead};
use crate::nn::{BackbonePreset, ParamStore};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub attention_heads: usize,
    pub visual_backbone: BackbonePreset,
    pub audio_backbone: BackbonePreset,
    pub pretrained_init: bool,
    pub positional_encoding: bool,
    pub layer_norm_eps: f64,
    /// Hidden width of the detection and attribution MLPs.
    pub head_hidden: usize,
    /// Hidden width of the projection MLPs.
    pub proj_hidden: usize,
    /// Projection dimension `P`.
    pub proj_dim: usize,
    pub dropout: f64,
    /// Number of fake generators `G`; the attribution head has `G + 1` outputs.
    pub num_generators: usize,
    /// Feed `z_v, z_a` straight to fusion, skipping cross-modal attention.
    pub bypass_cross_attention: bool,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            embed_dim: 64,
            attention_heads: 4,
            visual_backbone: BackbonePreset::Desk,
            audio_backbone: BackbonePreset::Desk,
            pretrained_init: false,
            positional_encoding: false,
            layer_norm_eps: 1e-5,
            head_hidden: 64,
            proj_hidden: 64,
            proj_dim: 64,
            dropout: 0.3,
            num_generators: 3,
            bypass_cross_attention: false,
        }
    }

    pub fn paper() -> Self {
        Self {
            embed_dim: 512,
            attention_heads: 8,
            visual_backbone: BackbonePreset::Resnet50,
            audio_backbone: BackbonePreset::Resnet18,
            head_hidden: 512,
            proj_hidden: 512,
            proj_dim: 512,
            ..Self::desk()
        }
    }

    pub fn encoder_config(&self, frames: usize) -> EncoderConfig {
        EncoderConfig {
            embed_dim: self.embed_dim,
            frames,
            visual_backbone: self.visual_backbone,
            audio_backbone: self.audio_backbone,
            attention_heads: self.attention_heads,
            pretrained_init: self.pretrained_init,
            positional_encoding: self.positional_encoding,
            layer_norm_eps: self.layer_norm_eps,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_generators + 1
    }
}

/// Every intermediate representation of one batch.
#[derive(Debug, Clone)]
pub struct EmbeddingBundle {
    pub z_v: Tensor,
    pub z_a: Tensor,
    pub zt_v: Tensor,
    pub zt_a: Tensor,
    /// `[B, 2D]`, `[zt_v | zt_a]`.
    pub z_f: Tensor,
    pub p_v: Tensor,
    pub p_a: Tensor,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub embeddings: EmbeddingBundle,
    pub heads: HeadOutputs,
}

/// Dropout randomness is drawn only in training mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut StreamRng),
}

/// Stacked model inputs plus labels.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, T, 3, S, S]`
    pub frames: Tensor,
    /// `[B, 1, 128, 128]`
    pub mel: Tensor,
    pub y: Vec<u8>,
    pub g: Vec<u32>,
    pub source_ids: Vec<String>,
}

impl Batch {
    pub fn from_samples(samples: &[Sample], device: &Device) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (t, s) = (first.num_frames, first.frame_size);
        let mut frames = Vec::with_capacity(samples.len() * first.frames.len());
        let mut mels = Vec::with_capacity(samples.len() * first.mel.len());
        for smp in samples {
            if smp.num_frames != t || smp.frame_size != s {
                return Err(Error::Shape(format!(
                    "{}: clip geometry {}x{} differs from batch {}x{}",
                    smp.source_id, smp.num_frames, smp.frame_size, t, s
                )));
            }
            frames.extend_from_slice(&smp.frames);
            mels.extend_from_slice(&smp.mel);
        }
        let b = samples.len();
        Ok(Self {
            frames: Tensor::from_vec(frames, (b, t, 3, s, s), device)?,
            mel: Tensor::from_vec(mels, (b, 1, mel::N_MELS, mel::N_FRAMES), device)?,
            y: samples.iter().map(|s| s.y).collect(),
            g: samples.iter().map(|s| s.g).collect(),
            source_ids: samples.iter().map(|s| s.source_id.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub struct Model {
    pub store: ParamStore,
    pub visual: VisualEncoder,
    pub audio: AudioEncoder,
    pub cross: CrossModalAttention,
    pub detect: DetectionHead,
    pub attribute: AttributionHead,
    pub project_visual: ProjectionHead,
    pub project_audio: ProjectionHead,
    pub config: ModelConfig,
    pub frames: usize,
}

impl Model {
    /// Builds and initializes the network; initialization draws from the
    /// `init` stream of `seed`.
    pub fn new(config: &ModelConfig, frames: usize, seed: u64) -> Result<Self> {
        let enc = config.encoder_config(frames);
        enc.validate()?;
        if config.num_generators < 1 {
            return Err(Error::Config("model.num_generators must be >= 1".into()));
        }
        let mut store = ParamStore::new(seed);
        let d = config.embed_dim;
        let visual = VisualEncoder::new(&mut store, "visual", &enc)?;
        let audio = AudioEncoder::new(&mut store, "audio", &enc)?;
        let cross = CrossModalAttention::new(&mut store, "cross", d, config.attention_heads, config.layer_norm_eps)?;
        let detect = DetectionHead::new(&mut store, "detect", 2 * d, config.head_hidden, config.dropout)?;
        let attribute = AttributionHead::new(
            &mut store,
            "attribute",
            2 * d,
            config.head_hidden,
            config.num_classes(),
            config.dropout,
        )?;
        let project_visual = ProjectionHead::new(&mut store, "proj_v", d, config.proj_hidden, config.proj_dim)?;
        let project_audio = ProjectionHead::new(&mut store, "proj_a", d, config.proj_hidden, config.proj_dim)?;
        Ok(Self {
            store,
            visual,
            audio,
            cross,
            detect,
            attribute,
            project_visual,
            project_audio,
            config: config.clone(),
            frames,
        })
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    pub fn forward(&self, batch: &Batch, mode: Mode<'_>) -> Result<Forward> {
        let z_v = self.visual.forward(&batch.frames)?;
        let z_a = self.audio.forward(&batch.mel)?;
        let (zt_v, zt_a) = if self.config.bypass_cross_attention {
            (z_v.clone(), z_a.clone())
        } else {
            self.cross.forward(&z_v, &z_a)?
        };
        let z_f = fuse(&zt_v, &zt_a)?;
        let (detect, attribute) = match mode {
            Mode::Eval => (self.detect.forward(&z_f, None)?, self.attribute.forward(&z_f, None)?),
            Mode::Train(rng) => {
                let d = self.detect.forward(&z_f, Some(&mut *rng))?;
                (d, self.attribute.forward(&z_f, Some(rng))?)
            }
        };
        let p_v = self.project_visual.forward(&zt_v)?;
        let p_a = self.project_audio.forward(&zt_a)?;
        Ok(Forward {
            embeddings: EmbeddingBundle {
                z_v,
                z_a,
                zt_v,
                zt_a,
                z_f,
                p_v,
                p_a,
            },
            heads: HeadOutputs {
                detect_logit: detect.0,
                detect_prob: detect.1,
                attr_logits: attribute.0,
                attr_probs: attribute.1,
            },
        })
    }
}
