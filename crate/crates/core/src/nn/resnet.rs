//! Residual convolutional backbones with group normalization.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, GroupNorm};
use super::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackbonePreset {
    /// Four basic residual blocks, widths 16-32-64-64, 64-d features.
    Desk,
    /// 18-layer basic-block network, 512-d features.
    Resnet18,
    /// 50-layer bottleneck network, 2048-d features.
    Resnet50,
}

impl BackbonePreset {
    pub fn feature_dim(self) -> usize {
        match self {
            BackbonePreset::Desk => 64,
            BackbonePreset::Resnet18 => 512,
            BackbonePreset::Resnet50 => 2048,
        }
    }
}

fn groups(channels: usize) -> usize {
    (channels / 4).clamp(1, 32)
}

struct ConvNorm {
    conv: Conv2d,
    norm: GroupNorm,
}

impl ConvNorm {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), input, output, kernel, stride, padding)?,
            norm: GroupNorm::new(store, &format!("{name}.norm"), output, groups(output))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.norm.forward(&self.conv.forward(x)?)
    }
}

enum Block {
    Basic {
        a: ConvNorm,
        b: ConvNorm,
        shortcut: Option<ConvNorm>,
    },
    Bottleneck {
        a: ConvNorm,
        b: ConvNorm,
        c: ConvNorm,
        shortcut: Option<ConvNorm>,
    },
}

impl Block {
    fn basic(store: &mut ParamStore, name: &str, input: usize, output: usize, stride: usize) -> Result<Self> {
        Ok(Block::Basic {
            a: ConvNorm::new(store, &format!("{name}.a"), input, output, 3, stride, 1)?,
            b: ConvNorm::new(store, &format!("{name}.b"), output, output, 3, 1, 1)?,
            shortcut: Self::shortcut(store, name, input, output, stride)?,
        })
    }

    fn bottleneck(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        width: usize,
        stride: usize,
    ) -> Result<Self> {
        let output = width * 4;
        Ok(Block::Bottleneck {
            a: ConvNorm::new(store, &format!("{name}.a"), input, width, 1, 1, 0)?,
            b: ConvNorm::new(store, &format!("{name}.b"), width, width, 3, stride, 1)?,
            c: ConvNorm::new(store, &format!("{name}.c"), width, output, 1, 1, 0)?,
            shortcut: Self::shortcut(store, name, input, output, stride)?,
        })
    }

    fn shortcut(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        stride: usize,
    ) -> Result<Option<ConvNorm>> {
        if input == output && stride == 1 {
            return Ok(None);
        }
        Ok(Some(ConvNorm::new(store, &format!("{name}.shortcut"), input, output, 1, stride, 0)?))
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (y, shortcut) = match self {
            Block::Basic { a, b, shortcut } => (b.forward(&a.forward(x)?.relu()?)?, shortcut),
            Block::Bottleneck { a, b, c, shortcut } => {
                let h = b.forward(&a.forward(x)?.relu()?)?.relu()?;
                (c.forward(&h)?, shortcut)
            }
        };
        let skip = match shortcut {
            Some(s) => s.forward(x)?,
            None => x.clone(),
        };
        Ok((y + skip)?.relu()?)
    }
}

/// Stem convolution, pooling, residual stages and global average pooling.
pub struct Backbone {
    pub preset: BackbonePreset,
    /// First convolution; its weight is swapped for the channel-averaged
    /// version to build single-channel backbones.
    pub stem: Conv2d,
    stem_norm: GroupNorm,
    blocks: Vec<Block>,
}

impl Backbone {
    /// Builds a three-channel backbone. Single-channel variants are derived
    /// by replacing `stem` (see the audio encoder).
    pub fn new(store: &mut ParamStore, name: &str, preset: BackbonePreset) -> Result<Self> {
        let (stem_width, kernel, stride, padding) = match preset {
            BackbonePreset::Desk => (16, 3, 2, 1),
            _ => (64, 7, 2, 3),
        };
        let stem = Conv2d::new(store, &format!("{name}.stem.conv"), 3, stem_width, kernel, stride, padding)?;
        let stem_norm = GroupNorm::new(store, &format!("{name}.stem.norm"), stem_width, groups(stem_width))?;
        let mut blocks = Vec::new();
        match preset {
            BackbonePreset::Desk => {
                let mut input = stem_width;
                for (i, (width, stride)) in [(16, 1), (32, 2), (64, 2), (64, 2)].into_iter().enumerate() {
                    blocks.push(Block::basic(store, &format!("{name}.block{i}"), input, width, stride)?);
                    input = width;
                }
            }
            BackbonePreset::Resnet18 | BackbonePreset::Resnet50 => {
                let depths = if preset == BackbonePreset::Resnet18 {
                    [2, 2, 2, 2]
                } else {
                    [3, 4, 6, 3]
                };
                let mut input = stem_width;
                for (stage, (&depth, width)) in depths.iter().zip([64, 128, 256, 512]).enumerate() {
                    for i in 0..depth {
                        let stride = if i == 0 && stage > 0 { 2 } else { 1 };
                        let n = format!("{name}.stage{stage}.{i}");
                        if preset == BackbonePreset::Resnet18 {
                            blocks.push(Block::basic(store, &n, input, width, stride)?);
                            input = width;
                        } else {
                            blocks.push(Block::bottleneck(store, &n, input, width, stride)?);
                            input = width * 4;
                        }
                    }
                }
            }
        }
        Ok(Self {
            preset,
            stem,
            stem_norm,
            blocks,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.preset.feature_dim()
    }

    /// `[n, c, h, w]` -> `[n, feature_dim]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.stem_norm.forward(&self.stem.forward(x)?)?.relu()?;
        let (_, _, hh, ww) = h.dims4()?;
        if hh >= 2 && ww >= 2 {
            h = h.avg_pool2d(2)?;
        }
        for block in &self.blocks {
            h = block.forward(&h)?;
        }
        Ok(h.mean((2, 3))?)
    }
}
