//! Training objectives and their weighted combination.

pub mod attribution;
pub mod centroid;
pub mod contrastive;
pub mod focal;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

pub use attribution::attribution_ce;
pub use centroid::{centroid_loss, CentroidTable};
pub use contrastive::{cmffc_loss, eligible_groups, info_nce, info_nce_directional, FingerprintLoss};
pub use focal::{focal_loss, label_tensor, PROB_EPS};

use crate::error::{Error, Result};
use crate::model::{Batch, Forward};
use crate::nn::ops;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_attr: f64,
    pub lambda_cont: f64,
    pub lambda_fp: f64,
    pub lambda_cen: f64,
    /// Focal class weight.
    pub alpha: f64,
    /// Focal focusing exponent.
    pub gamma: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Centroid EMA momentum.
    pub momentum: f64,
    /// `alpha` weights the fake class (otherwise the real class).
    pub alpha_on_fake: bool,
    /// Skip the centroid term for classes whose centroid was never updated.
    pub defer_centroid_until_seen: bool,
    /// Compute the per-clip contrastive term over real clips only.
    pub contrastive_exclude_fakes: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_attr: 0.3,
            lambda_cont: 0.1,
            lambda_fp: 0.2,
            lambda_cen: 0.05,
            alpha: 0.75,
            gamma: 2.0,
            tau: 0.07,
            momentum: 0.9,
            alpha_on_fake: true,
            defer_centroid_until_seen: false,
            contrastive_exclude_fakes: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_attr, self.lambda_cont, self.lambda_fp, self.lambda_cen];
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("loss.tau must be > 0, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("loss.momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("loss.gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("loss.alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    fn fake_alpha(&self) -> f64 {
        if self.alpha_on_fake {
            self.alpha
        } else {
            1.0 - self.alpha
        }
    }
}

/// The five scalar loss tensors of one batch.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub det: Tensor,
    pub attr: Tensor,
    pub cont: Tensor,
    pub fp: Tensor,
    pub cen: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub det: f64,
    pub attr: f64,
    pub cont: f64,
    pub fp: f64,
    pub cen: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(det: f64, attr: f64, cont: f64, fp: f64, cen: f64, w: &LossWeights) -> Self {
        Self {
            det,
            attr,
            cont,
            fp,
            cen,
            total: det + w.lambda_attr * attr + w.lambda_cont * cont + w.lambda_fp * fp + w.lambda_cen * cen,
        }
    }
}

/// Weighted sum `det + l_a attr + l_c cont + l_f fp + l_r cen`. Fails on the
/// first non-finite component, naming it.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights) -> Result<(Tensor, LossBreakdown)> {
    let named = [
        ("det", &terms.det),
        ("attr", &terms.attr),
        ("cont", &terms.cont),
        ("fp", &terms.fp),
        ("cen", &terms.cen),
    ];
    let mut values = [0f64; 5];
    for (slot, (name, t)) in values.iter_mut().zip(named) {
        let v = ops::scalar(t)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss component {name} ({v})")));
        }
        *slot = v;
    }
    let [det, attr, cont, fp, cen] = values;
    let total = (terms.det.clone()
        + (terms.attr.clone() * weights.lambda_attr)?
        + (terms.cont.clone() * weights.lambda_cont)?
        + (terms.fp.clone() * weights.lambda_fp)?
        + (terms.cen.clone() * weights.lambda_cen)?)?;
    Ok((total, LossBreakdown::compose(det, attr, cont, fp, cen, weights)))
}

/// Per-batch side information.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LossTelemetry {
    /// Generator groups that entered the fingerprint term.
    pub fingerprint_groups: usize,
}

/// Evaluates all five objectives on one forward pass.
pub fn compute_terms(
    forward: &Forward,
    batch: &Batch,
    centroids: &CentroidTable,
    weights: &LossWeights,
) -> Result<(LossTerms, LossTelemetry)> {
    let heads = &forward.heads;
    let emb = &forward.embeddings;
    let dtype = heads.detect_prob.dtype();
    let device = heads.detect_prob.device();
    let y = label_tensor(&batch.y, dtype, device)?;
    let det = focal_loss(&heads.detect_prob, &y, weights.fake_alpha(), weights.gamma)?;
    let attr = attribution_ce(&heads.attr_probs, &batch.g)?;
    let cont = if weights.contrastive_exclude_fakes {
        let real: Vec<u32> = (0..batch.len() as u32).filter(|&i| batch.g[i as usize] == 0).collect();
        if real.is_empty() {
            Tensor::zeros((), dtype, device)?
        } else {
            let idx = Tensor::from_slice(&real, real.len(), device)?;
            info_nce(&emb.p_v.index_select(&idx, 0)?, &emb.p_a.index_select(&idx, 0)?, weights.tau)?
        }
    } else {
        info_nce(&emb.p_v, &emb.p_a, weights.tau)?
    };
    let fp = cmffc_loss(&emb.p_v, &emb.p_a, &batch.g, weights.tau)?;
    let cen = centroid_loss(&emb.z_f, &batch.g, centroids, weights.defer_centroid_until_seen)?;
    Ok((
        LossTerms {
            det,
            attr,
            cont,
            fp: fp.loss,
            cen,
        },
        LossTelemetry {
            fingerprint_groups: fp.groups,
        },
    ))
}
