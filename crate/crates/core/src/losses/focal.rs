use candle_core::{DType, Device, Tensor};

use crate::error::Result;

/// Clamp applied to every probability before a logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Labels as a float tensor of `dtype`.
pub fn label_tensor(y: &[u8], dtype: DType, device: &Device) -> Result<Tensor> {
    let v: Vec<f32> = y.iter().map(|&v| f32::from(v)).collect();
    Ok(Tensor::from_vec(v, y.len(), device)?.to_dtype(dtype)?)
}

/// Mean focal loss `-a_t (1 - p_t)^gamma log p_t` over the batch, where
/// `alpha` weights the positive (fake, `y = 1`) class and `1 - alpha` the
/// negative one.
pub fn focal_loss(prob: &Tensor, y: &Tensor, alpha: f64, gamma: f64) -> Result<Tensor> {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let not_y = y.affine(-1.0, 1.0)?;
    // p_t = y p + (1 - y)(1 - p)
    let p_t = (y.mul(&p)? + not_y.mul(&p.affine(-1.0, 1.0)?)?)?;
    let alpha_t = y.affine(2.0 * alpha - 1.0, 1.0 - alpha)?;
    let modulator = if gamma == 0.0 {
        p_t.ones_like()?
    } else {
        p_t.affine(-1.0, 1.0)?.powf(gamma)?
    };
    let per_sample = alpha_t.mul(&modulator)?.mul(&p_t.log()?)?.neg()?;
    Ok(per_sample.mean_all()?)
}
