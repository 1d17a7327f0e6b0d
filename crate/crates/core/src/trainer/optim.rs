//! AdamW with decoupled weight decay, the cosine schedule and global-norm
//! clipping. Optimizer state lives in plain vectors so it checkpoints
//! exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `eta/2 (1 + cos(pi e / E))`.
pub fn cosine_lr(base: f64, epoch: usize, epochs: usize) -> f64 {
    0.5 * base * (1.0 + (PI * epoch as f64 / epochs as f64).cos())
}

pub fn global_norm(grads: &[Vec<f32>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| f64::from(*g) * f64::from(*g))
        .sum::<f64>()
        .sqrt()
}

/// Rescales every gradient by `clip_norm / norm` when the global l2 norm
/// exceeds `clip_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Vec<f32>], clip_norm: f64) -> Result<f64> {
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFinite(format!("gradient norm {norm}")));
    }
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for g in grads.iter_mut().flatten() {
            *g = (f64::from(*g) * scale) as f32;
        }
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    /// Completed steps.
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update of every parameter in place:
    /// `p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [Vec<f32>], grads: &[Vec<f32>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} parameters and {} gradients for {} optimizer slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let AdamWConfig {
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape(format!("parameter of {} values, gradient of {}", p.len(), g.len())));
            }
            for i in 0..p.len() {
                let gi = f64::from(g[i]);
                let mi = beta1 * f64::from(m[i]) + (1.0 - beta1) * gi;
                let vi = beta2 * f64::from(v[i]) + (1.0 - beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = (mi / c1) / ((vi / c2).sqrt() + eps);
                p[i] = (f64::from(p[i]) * decay - lr * update) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> AdamWConfig {
        AdamWConfig {
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    #[test]
    fn schedule_endpoints() {
        assert!((cosine_lr(1e-4, 0, 50) - 1e-4).abs() < 1e-12);
        assert!((cosine_lr(1e-4, 25, 50) - 5e-5).abs() < 1e-12);
        assert!(cosine_lr(1e-4, 50, 50).abs() < 1e-12);
    }

    #[test]
    fn clipping_cases() {
        let mut small = vec![vec![0.3f32, 0.4]];
        let before = small.clone();
        assert!((clip_gradients(&mut small, 1.0).unwrap() - 0.5).abs() < 1e-7);
        assert_eq!(small, before);
        let mut big = vec![vec![1.2f32], vec![1.6]];
        clip_gradients(&mut big, 1.0).unwrap();
        assert!((global_norm(&big) - 1.0).abs() < 1e-6);
        let mut five = vec![vec![3.0f32, 4.0]];
        clip_gradients(&mut five, 1.0).unwrap();
        assert_eq!(five, vec![vec![0.6f32, 0.8]]);
        assert!(clip_gradients(&mut [vec![f32::NAN]], 1.0).is_err());
    }

    #[test]
    fn zero_gradient_parameter_only_decays() {
        let mut opt = AdamW::new(cfg(), &[2]);
        let mut p = vec![vec![2.0f32, -0.5]];
        let g = vec![vec![0.0f32; 2]];
        for _ in 0..3 {
            let before = p[0].clone();
            opt.step(&mut p, &g, 1e-2).unwrap();
            for (a, b) in p[0].iter().zip(&before) {
                let expect = f64::from(*b) - 1e-2 * 1e-4 * f64::from(*b);
                assert!((f64::from(*a) - expect).abs() < 1e-7, "{a} vs {expect}");
            }
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..cfg() }, &[2]);
        let mut p = vec![vec![1.0f32, 1.0]];
        opt.step(&mut p, &[vec![0.5, -2.0]], 0.1).unwrap();
        assert!((p[0][0] - 0.9).abs() < 1e-6 && (p[0][1] - 1.1).abs() < 1e-6);
        assert_eq!(opt.step, 1);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_min(raw in prop::collection::vec(-10.0f32..10.0, 1..40), clip in 0.1f64..5.0) {
            let mut g = vec![raw];
            let before = global_norm(&g);
            clip_gradients(&mut g, clip).unwrap();
            prop_assert!((global_norm(&g) - before.min(clip)).abs() < 1e-6 * (1.0 + clip));
        }
    }
}
