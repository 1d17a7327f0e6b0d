//! Visual and audio encoders, each producing one `D`-dimensional embedding
//! per clip.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::datapipe::mel;
use crate::error::{Error, Result};
use crate::nn::{Backbone, BackbonePreset, Conv2d, Init, LayerNorm, Linear, MultiHeadAttention, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub frames: usize,
    pub visual_backbone: BackbonePreset,
    pub audio_backbone: BackbonePreset,
    pub attention_heads: usize,
    pub pretrained_init: bool,
    /// Learnable per-frame position embedding before temporal attention.
    pub positional_encoding: bool,
    pub layer_norm_eps: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames per clip must be >= 1".into()));
        }
        if self.attention_heads == 0 || self.embed_dim % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be divisible by attention_heads {}",
                self.embed_dim, self.attention_heads
            )));
        }
        if self.pretrained_init {
            return Err(Error::Config(
                "pretrained_init requires externally supplied backbone weights, none are bundled".into(),
            ));
        }
        Ok(())
    }
}

/// Projected per-frame features `H`, `[B, T, D]`.
#[derive(Debug, Clone)]
pub struct FrameFeatureSequence(pub Tensor);

pub struct VisualEncoder {
    pub backbone: Backbone,
    pub projection: Linear,
    pub projection_norm: LayerNorm,
    pub position: Option<Tensor>,
    pub attention: MultiHeadAttention,
    pub attention_norm: LayerNorm,
    frames: usize,
}

impl VisualEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        let backbone = Backbone::new(store, &format!("{name}.backbone"), cfg.visual_backbone)?;
        let d = cfg.embed_dim;
        let projection = Linear::new(store, &format!("{name}.proj"), backbone.feature_dim(), d, true)?;
        let projection_norm = LayerNorm::new(store, &format!("{name}.proj_norm"), d, cfg.layer_norm_eps)?;
        let position = if cfg.positional_encoding {
            Some(store.add(format!("{name}.position"), &[cfg.frames, d], Init::Normal(0.02))?)
        } else {
            None
        };
        let attention = MultiHeadAttention::new(store, &format!("{name}.temporal"), d, cfg.attention_heads)?;
        let attention_norm = LayerNorm::new(store, &format!("{name}.temporal_norm"), d, cfg.layer_norm_eps)?;
        Ok(Self {
            backbone,
            projection,
            projection_norm,
            position,
            attention,
            attention_norm,
            frames: cfg.frames,
        })
    }

    /// `[B, T, 3, S, S]` -> per-frame `ReLU(LayerNorm(W f + b))`, `[B, T, D]`.
    /// Frames are processed independently.
    pub fn encode_frames(&self, frames: &Tensor) -> Result<FrameFeatureSequence> {
        let dims = frames.dims();
        if dims.len() != 5 || dims[1] != self.frames || dims[2] != 3 || dims[3] != dims[4] {
            return Err(Error::Shape(format!(
                "visual input {:?}, expected [B, {}, 3, S, S]",
                dims, self.frames
            )));
        }
        let (b, t) = (dims[0], dims[1]);
        let flat = frames.reshape((b * t, 3, dims[3], dims[4]))?;
        let feats = self.backbone.forward(&flat)?;
        let h = self
            .projection_norm
            .forward(&self.projection.forward(&feats)?)?
            .relu()?;
        Ok(FrameFeatureSequence(h.reshape((b, t, ()))?))
    }

    /// `LayerNorm(H + MHA(H, H, H))`, normalized per position.
    pub fn temporal_attend(&self, h: &FrameFeatureSequence) -> Result<Tensor> {
        let h = match &self.position {
            Some(p) => h.0.broadcast_add(p)?,
            None => h.0.clone(),
        };
        let mixed = self.attention.forward(&h, &h)?;
        self.attention_norm.forward(&(h + mixed)?)
    }

    pub fn forward(&self, frames: &Tensor) -> Result<Tensor> {
        let h = self.encode_frames(frames)?;
        pool_visual(&self.temporal_attend(&h)?)
    }
}

/// Mean over the temporal axis: `[B, T, D]` -> `[B, D]`.
pub fn pool_visual(attended: &Tensor) -> Result<Tensor> {
    Ok(attended.mean(1)?)
}

/// Collapses an RGB first-layer kernel `[out, 3, k, k]` to a single-channel
/// kernel `[out, 1, k, k]` by averaging over the input channels.
pub fn adapt_first_layer(rgb_weights: &Tensor) -> Result<Tensor> {
    let dims = rgb_weights.dims();
    if dims.len() != 4 || dims[1] != 3 {
        return Err(Error::Shape(format!(
            "first-layer adaptation needs [out, 3, k, k] weights, got {dims:?}"
        )));
    }
    Ok(rgb_weights.mean_keepdim(1)?)
}

pub struct AudioEncoder {
    pub backbone: Backbone,
    pub projection: Linear,
}

impl AudioEncoder {
    /// The backbone is built for RGB input and its stem is then replaced by
    /// the channel-averaged kernel (whatever the stem weights are).
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        let mut backbone = Backbone::new(store, &format!("{name}.backbone"), cfg.audio_backbone)?;
        let single = adapt_first_layer(&backbone.stem.weight)?;
        let values: Vec<f32> = single.flatten_all()?.to_vec1()?;
        let weight = store.replace(&format!("{name}.backbone.stem.conv.weight"), single.dims(), values)?;
        backbone.stem = Conv2d::from_weight(weight, backbone.stem.stride, backbone.stem.padding);
        let projection = Linear::new(store, &format!("{name}.proj"), backbone.feature_dim(), cfg.embed_dim, true)?;
        Ok(Self {
            backbone,
            projection,
        })
    }

    /// `[B, 1, 128, 128]` -> `[B, D]`.
    pub fn forward(&self, mel_batch: &Tensor) -> Result<Tensor> {
        let dims = mel_batch.dims();
        if dims.len() != 4 || dims[1..] != [1, mel::N_MELS, mel::N_FRAMES] {
            return Err(Error::Shape(format!(
                "audio input {dims:?}, expected [B, 1, {}, {}]",
                mel::N_MELS,
                mel::N_FRAMES
            )));
        }
        let feats = self.backbone.forward(mel_batch)?;
        self.projection.forward(&feats)
    }
}
