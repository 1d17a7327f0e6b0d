//! Differentiable helpers composed from primitive tensor ops, so every one
//! of them has a backward pass.

use candle_core::{DType, Tensor, D};

use crate::error::Result;
use crate::rng::StreamRng;
use rand::Rng;

pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

/// `log(sum(exp(x)))` over the last axis, keeping the axis.
pub fn logsumexp_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let s = x.broadcast_sub(&max)?.exp()?.sum_keepdim(D::Minus1)?;
    Ok(s.log()?.broadcast_add(&max)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    // tanh form: no overflow in either direction, finite gradient everywhere
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

/// Row-wise l2 normalization with `eps` added to the norm.
pub fn l2_normalize_rows(x: &Tensor, eps: f64) -> Result<Tensor> {
    let norm = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    Ok(x.broadcast_div(&(norm + eps)?)?)
}

/// Inverted dropout. `rng == None` is evaluation mode (identity).
pub fn dropout(x: &Tensor, p: f64, rng: Option<&mut StreamRng>) -> Result<Tensor> {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = 1.0 - p;
            let mask: Vec<f32> = (0..x.elem_count())
                .map(|_| if rng.random_bool(keep) { (1.0 / keep) as f32 } else { 0.0 })
                .collect();
            let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
            Ok(x.mul(&mask)?)
        }
        _ => Ok(x.clone()),
    }
}

pub fn scalar(x: &Tensor) -> Result<f64> {
    Ok(x.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let x = Tensor::new(&[[1f64, 2., 3.], [1000., 1000., 1000.]], &Device::Cpu).unwrap();
        let p = softmax_last(&x).unwrap();
        let sums: Vec<f64> = p.sum(1).unwrap().to_vec1().unwrap();
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
        let shifted = softmax_last(&(x.clone() + 5.0).unwrap()).unwrap();
        let a: Vec<Vec<f64>> = p.to_vec2().unwrap();
        let b: Vec<Vec<f64>> = shifted.to_vec2().unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (u, v) in ra.iter().zip(rb) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        let lse: Vec<Vec<f64>> = logsumexp_last(&x).unwrap().to_vec2().unwrap();
        assert!((lse[0][0] - (1f64.exp() + 2f64.exp() + 3f64.exp()).ln()).abs() < 1e-12);
        assert!((lse[1][0] - (1000.0 + 3f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_limits() {
        let x = Tensor::new(&[-100f32, 0., 100.], &Device::Cpu).unwrap();
        let s: Vec<f32> = sigmoid(&x).unwrap().to_vec1().unwrap();
        assert!((0.0..1e-30).contains(&s[0]));
        assert_eq!(s[1], 0.5);
        assert_eq!(s[2], 1.0);
    }

    #[test]
    fn eval_dropout_is_identity() {
        let x = Tensor::new(&[1f32, 2., 3.], &Device::Cpu).unwrap();
        let y: Vec<f32> = dropout(&x, 0.3, None).unwrap().to_vec1().unwrap();
        assert_eq!(y, vec![1., 2., 3.]);
    }
}
