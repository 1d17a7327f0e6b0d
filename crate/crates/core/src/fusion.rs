//! Bidirectional cross-modal attention, concatenation fusion, and the
//! detection, attribution and projection heads.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::{LayerNorm, MultiHeadAttention, ParamStore, TwoLayerMlp};
use crate::rng::StreamRng;

/// Each direction has its own attention and normalization parameters.
pub struct CrossModalAttention {
    pub visual_from_audio: MultiHeadAttention,
    pub visual_norm: LayerNorm,
    pub audio_from_visual: MultiHeadAttention,
    pub audio_norm: LayerNorm,
}

impl CrossModalAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            visual_from_audio: MultiHeadAttention::new(store, &format!("{name}.v_from_a"), dim, heads)?,
            visual_norm: LayerNorm::new(store, &format!("{name}.v_norm"), dim, eps)?,
            audio_from_visual: MultiHeadAttention::new(store, &format!("{name}.a_from_v"), dim, heads)?,
            audio_norm: LayerNorm::new(store, &format!("{name}.a_norm"), dim, eps)?,
        })
    }

    /// `z_v, z_a: [B, D]`. Each embedding is a one-token sequence, so every
    /// sample attends only to its own partner.
    pub fn forward(&self, z_v: &Tensor, z_a: &Tensor) -> Result<(Tensor, Tensor)> {
        if z_v.dims() != z_a.dims() || z_v.rank() != 2 {
            return Err(Error::Shape(format!(
                "cross-modal attention needs matching [B, D] inputs, got {:?} and {:?}",
                z_v.dims(),
                z_a.dims()
            )));
        }
        let v = z_v.unsqueeze(1)?;
        let a = z_a.unsqueeze(1)?;
        let v_mixed = self.visual_from_audio.forward(&v, &a)?;
        let a_mixed = self.audio_from_visual.forward(&a, &v)?;
        let zt_v = self.visual_norm.forward(&(v + v_mixed)?)?.squeeze(1)?;
        let zt_a = self.audio_norm.forward(&(a + a_mixed)?)?.squeeze(1)?;
        Ok((zt_v, zt_a))
    }
}

/// Concatenation, visual half first: `[B, D] x [B, D] -> [B, 2D]`.
pub fn fuse(zt_v: &Tensor, zt_a: &Tensor) -> Result<Tensor> {
    if zt_v.dim(0)? != zt_a.dim(0)? {
        return Err(Error::Shape(format!(
            "fusing batches of {} and {}",
            zt_v.dim(0)?,
            zt_a.dim(0)?
        )));
    }
    Ok(Tensor::cat(&[zt_v, zt_a], 1)?)
}

#[derive(Debug, Clone)]
pub struct HeadOutputs {
    pub detect_logit: Tensor,
    pub detect_prob: Tensor,
    pub attr_logits: Tensor,
    pub attr_probs: Tensor,
}

pub struct DetectionHead(pub TwoLayerMlp);

impl DetectionHead {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, dropout: f64) -> Result<Self> {
        Ok(Self(TwoLayerMlp::new(store, name, input, hidden, 1, dropout)?))
    }

    /// Returns `(logit [B], probability [B])`.
    pub fn forward(&self, z_f: &Tensor, rng: Option<&mut StreamRng>) -> Result<(Tensor, Tensor)> {
        let logit = self.0.forward(z_f, rng)?.squeeze(1)?;
        let prob = ops::sigmoid(&logit)?;
        Ok((logit, prob))
    }
}

pub struct AttributionHead(pub TwoLayerMlp);

impl AttributionHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
    ) -> Result<Self> {
        Ok(Self(TwoLayerMlp::new(store, name, input, hidden, classes, dropout)?))
    }

    /// Returns `(logits [B, G+1], probabilities [B, G+1])`; class 0 is real.
    pub fn forward(&self, z_f: &Tensor, rng: Option<&mut StreamRng>) -> Result<(Tensor, Tensor)> {
        let logits = self.0.forward(z_f, rng)?;
        let probs = ops::softmax_last(&logits)?;
        Ok((logits, probs))
    }
}

pub const PROJECTION_EPS: f64 = 1e-12;

/// Two-layer projection followed by l2 normalization of each row.
pub struct ProjectionHead(pub TwoLayerMlp);

impl ProjectionHead {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, output: usize) -> Result<Self> {
        Ok(Self(TwoLayerMlp::new(store, name, input, hidden, output, 0.0)?))
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        ops::l2_normalize_rows(&self.0.forward(z, None)?, PROJECTION_EPS)
    }
}
