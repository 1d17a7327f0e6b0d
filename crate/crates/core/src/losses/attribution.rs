use candle_core::{Device, Tensor};

use super::focal::PROB_EPS;
use crate::error::{Error, Result};

pub fn class_index_tensor(g: &[u32], device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_slice(g, g.len(), device)?)
}

/// Mean of `-log probs[i, g_i]` over the batch.
pub fn attribution_ce(probs: &Tensor, g: &[u32]) -> Result<Tensor> {
    let (b, k) = probs.dims2()?;
    if b != g.len() {
        return Err(Error::Shape(format!("{b} probability rows for {} labels", g.len())));
    }
    if let Some(bad) = g.iter().find(|&&c| c as usize >= k) {
        return Err(Error::InvalidArgument(format!("class {bad} out of range for {k} classes")));
    }
    let idx = class_index_tensor(g, probs.device())?.unsqueeze(1)?;
    let picked = probs.gather(&idx, 1)?.squeeze(1)?;
    Ok(picked.clamp(PROB_EPS, 1.0)?.log()?.neg()?.mean_all()?)
}
