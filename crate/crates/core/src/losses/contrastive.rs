//! Cross-modal InfoNCE and its within-generator variant.

use std::collections::BTreeMap;

use candle_core::{Tensor, D};

use crate::error::{Error, Result};
use crate::nn::ops;

/// One direction: `mean_i -log softmax_j(x_i . y_j / tau)[i]`.
pub fn info_nce_directional(x: &Tensor, y: &Tensor, tau: f64) -> Result<Tensor> {
    let (b, px) = x.dims2()?;
    let (by, py) = y.dims2()?;
    if b != by || px != py {
        return Err(Error::Shape(format!("InfoNCE over {:?} and {:?}", x.dims(), y.dims())));
    }
    if b == 0 {
        return Err(Error::InvalidArgument("InfoNCE over an empty batch".into()));
    }
    let logits = (x.matmul(&y.t()?)? / tau)?;
    let lse = ops::logsumexp_last(&logits)?.squeeze(1)?;
    let positives = (x * y)?.sum(D::Minus1)? / tau;
    Ok((lse - positives?)?.mean_all()?)
}

/// Symmetric InfoNCE `(L(x, y) + L(y, x)) / 2` with in-batch negatives.
pub fn info_nce(x: &Tensor, y: &Tensor, tau: f64) -> Result<Tensor> {
    let a = info_nce_directional(x, y, tau)?;
    let b = info_nce_directional(y, x, tau)?;
    Ok(((a + b)? * 0.5)?)
}

#[derive(Debug, Clone)]
pub struct FingerprintLoss {
    pub loss: Tensor,
    /// Generator groups that contributed (fake class with >= 2 members).
    pub groups: usize,
}

/// Row indices of every fake generator with at least two samples, by class.
pub fn eligible_groups(g: &[u32]) -> BTreeMap<u32, Vec<u32>> {
    let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, &c) in g.iter().enumerate() {
        if c > 0 {
            groups.entry(c).or_default().push(i as u32);
        }
    }
    groups.retain(|_, rows| rows.len() >= 2);
    groups
}

/// Cross-modal fingerprint consistency: InfoNCE restricted to the rows of
/// each fake generator present at least twice, averaged over those groups.
/// Real rows never enter. No eligible group yields zero.
pub fn cmffc_loss(p_v: &Tensor, p_a: &Tensor, g: &[u32], tau: f64) -> Result<FingerprintLoss> {
    if p_v.dim(0)? != g.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", p_v.dim(0)?, g.len())));
    }
    let groups = eligible_groups(g);
    if groups.is_empty() {
        return Ok(FingerprintLoss {
            loss: Tensor::zeros((), p_v.dtype(), p_v.device())?,
            groups: 0,
        });
    }
    let mut total: Option<Tensor> = None;
    for rows in groups.values() {
        let idx = Tensor::from_slice(rows, rows.len(), p_v.device())?;
        let l = info_nce(&p_v.index_select(&idx, 0)?, &p_a.index_select(&idx, 0)?, tau)?;
        total = Some(match total {
            Some(t) => (t + l)?,
            None => l,
        });
    }
    let n = groups.len();
    Ok(FingerprintLoss {
        loss: (total.expect("nonempty") / n as f64)?,
        groups: n,
    })
}
