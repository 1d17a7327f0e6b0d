use candle_core::{Tensor, D};

use super::ops;
use super::{Init, ParamStore};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Fully connected layer; weights `[out, in]`, uniform(+-1/sqrt(in)) init.
#[derive(Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, bias: bool) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), &[output, input], Init::Uniform(bound))?;
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), &[output], Init::Uniform(bound))?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn with_init(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        weight: Init,
        bias: Init,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), &[output, input], weight)?;
        let bias = Some(store.add(format!("{name}.bias"), &[output], bias)?);
        Ok(Self { weight, bias })
    }

    /// Applies to the last axis of `x` (any leading shape).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims();
        let input = *dims.last().ok_or_else(|| Error::Shape("linear on a scalar".into()))?;
        let lead: usize = dims[..dims.len() - 1].iter().product();
        let flat = x.reshape((lead, input))?;
        let mut y = flat.matmul(&self.weight.t()?)?;
        if let Some(b) = &self.bias {
            y = y.broadcast_add(b)?;
        }
        let mut out_dims = dims.to_vec();
        *out_dims.last_mut().unwrap() = self.weight.dim(0)?;
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// Kaiming-normal (fan-out) weights, no bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let std = (2.0 / (output * kernel * kernel) as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            &[output, input, kernel, kernel],
            Init::Normal(std),
        )?;
        Ok(Self {
            weight,
            bias: None,
            stride,
            padding,
        })
    }

    pub fn from_weight(weight: Tensor, stride: usize, padding: usize) -> Self {
        Self {
            weight,
            bias: None,
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = im2col_conv(x, &self.weight, self.stride, self.padding)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, b.elem_count(), 1, 1))?)?,
            None => y,
        })
    }
}

/// Convolution as a patch gather plus one matrix product; its backward pass
/// is far cheaper on CPU than the transposed-convolution kernel.
pub fn im2col_conv(x: &Tensor, weight: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (o, ci, kh, kw) = weight.dims4()?;
    if c != ci {
        return Err(Error::Shape(format!("conv input {:?} vs weight {:?}", x.dims(), weight.dims())));
    }
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;
    let cols = if kh == 1 && kw == 1 && padding == 0 && stride == 1 {
        x.permute((0, 2, 3, 1))?.reshape((n * h * w, c))?
    } else {
        // index h * w addresses an appended zero used for padding taps
        let zero = h * w;
        let mut index = Vec::with_capacity(ho * wo * kh * kw);
        for oy in 0..ho {
            for ox in 0..wo {
                for i in 0..kh {
                    for j in 0..kw {
                        let y = (oy * stride + i) as isize - padding as isize;
                        let x = (ox * stride + j) as isize - padding as isize;
                        let inside = (0..h as isize).contains(&y) && (0..w as isize).contains(&x);
                        index.push(if inside { y as u32 * w as u32 + x as u32 } else { zero as u32 });
                    }
                }
            }
        }
        let index = Tensor::from_vec(index, ho * wo * kh * kw, x.device())?;
        let flat = Tensor::cat(&[&x.reshape((n, c, h * w))?, &x.zeros_like()?.reshape((n, c, h * w))?.narrow(2, 0, 1)?], 2)?;
        flat.index_select(&index, 2)?
            .reshape((n, c, ho * wo, kh * kw))?
            .transpose(1, 2)?
            .reshape((n * ho * wo, c * kh * kw))?
    };
    let y = cols.matmul(&weight.reshape((o, c * kh * kw))?.t()?)?;
    Ok(y.reshape((n, ho, wo, o))?.permute((0, 3, 1, 2))?.contiguous()?)
}

/// Normalization over the last axis with learned affine.
#[derive(Clone)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            gamma: store.add(format!("{name}.weight"), &[dim], Init::Ones)?,
            beta: store.add(format!("{name}.bias"), &[dim], Init::Zeros)?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Group normalization over `[n, c, h, w]`.
#[derive(Clone)]
pub struct GroupNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Result<Self> {
        if channels % groups != 0 {
            return Err(Error::Shape(format!("{channels} channels in {groups} groups")));
        }
        Ok(Self {
            gamma: store.add(format!("{name}.weight"), &[channels], Init::Ones)?,
            beta: store.add(format!("{name}.bias"), &[channels], Init::Zeros)?,
            groups,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let g = x.reshape((n, self.groups, (c / self.groups) * h * w))?;
        let mean = g.mean_keepdim(D::Minus1)?;
        let centered = g.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered
            .broadcast_div(&(var + self.eps)?.sqrt()?)?
            .reshape((n, c, h, w))?;
        Ok(normed
            .broadcast_mul(&self.gamma.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.beta.reshape((1, c, 1, 1))?)?)
    }
}

/// Scaled dot-product attention split over `heads`, with separate query,
/// key, value and output projections.
#[derive(Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "embedding dim {dim} is not divisible by {heads} attention heads"
            )));
        }
        // xavier-uniform input projections, zero biases
        let xavier = (6.0 / (2 * dim) as f64).sqrt();
        let proj = |store: &mut ParamStore, p: &str| {
            Linear::with_init(store, &format!("{name}.{p}"), dim, dim, Init::Uniform(xavier), Init::Zeros)
        };
        let q = proj(store, "q")?;
        let k = proj(store, "k")?;
        let v = proj(store, "v")?;
        let bound = 1.0 / (dim as f64).sqrt();
        let out = Linear::with_init(store, &format!("{name}.out"), dim, dim, Init::Uniform(bound), Init::Zeros)?;
        Ok(Self { q, k, v, out, heads })
    }

    /// `query: [b, lq, d]`, `context: [b, lk, d]` -> `[b, lq, d]`.
    pub fn forward(&self, query: &Tensor, context: &Tensor) -> Result<Tensor> {
        let (b, lq, d) = query.dims3()?;
        let (bk, lk, dk) = context.dims3()?;
        if b != bk || d != dk {
            return Err(Error::Shape(format!(
                "attention query {:?} vs context {:?}",
                query.dims(),
                context.dims()
            )));
        }
        let dh = d / self.heads;
        let split = |x: Tensor, l: usize| -> Result<Tensor> {
            Ok(x.reshape((b, l, self.heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(query)?, lq)?;
        let k = split(self.k.forward(context)?, lk)?;
        let v = split(self.v.forward(context)?, lk)?;
        let scores = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? / (dh as f64).sqrt())?;
        let attn = ops::softmax_last(&scores)?;
        let mixed = attn
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, lq, d))?;
        self.out.forward(&mixed)
    }
}

/// `Linear -> ReLU -> Dropout -> Linear`.
#[derive(Clone)]
pub struct TwoLayerMlp {
    pub first: Linear,
    pub second: Linear,
    pub dropout: f64,
}

impl TwoLayerMlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        dropout: f64,
    ) -> Result<Self> {
        Ok(Self {
            first: Linear::new(store, &format!("{name}.fc1"), input, hidden, true)?,
            second: Linear::new(store, &format!("{name}.fc2"), hidden, output, true)?,
            dropout,
        })
    }

    pub fn forward(&self, x: &Tensor, rng: Option<&mut StreamRng>) -> Result<Tensor> {
        let h = self.first.forward(x)?.relu()?;
        let h = ops::dropout(&h, self.dropout, rng)?;
        self.second.forward(&h)
    }
}
