use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datapipe::Split;
use crate::error::{Error, Result};

/// One evaluated clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub source_id: String,
    pub y: u8,
    pub g: u32,
    /// Detection probability of "fake".
    pub prob: f64,
    /// Argmax of the attribution distribution.
    pub attr_pred: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub num_samples: usize,
    pub threshold: f64,
    pub balanced_accuracy: f64,
    /// Absent when the split lacks one detection class.
    pub auc: Option<f64>,
    pub f1: f64,
    pub real_accuracy: f64,
    pub fake_accuracy: f64,
    pub attribution_accuracy: f64,
    /// `[true][predicted]`, index 0 real, 1 fake.
    pub detect_confusion: [[u64; 2]; 2],
    /// `[true g][predicted g]`.
    pub attr_confusion: Vec<Vec<u64>>,
    /// Fraction of each class given the correct detection decision.
    pub per_generator_detection: BTreeMap<u32, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Mann-Whitney AUC: the fraction of (real, fake) pairs where the fake
/// scores higher, ties counting one half. `None` when either list is empty
/// or holds a NaN.
pub fn auc(real: &[f64], fake: &[f64]) -> Option<f64> {
    if real.is_empty() || fake.is_empty() || real.iter().chain(fake).any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted = real.to_vec();
    sorted.sort_by(f64::total_cmp);
    // twice the win count plus ties, kept integral
    let mut doubled: u64 = 0;
    for &s in fake {
        let below = sorted.partition_point(|&r| r < s) as u64;
        let not_above = sorted.partition_point(|&r| r <= s) as u64;
        doubled += 2 * below + (not_above - below);
    }
    Some(doubled as f64 / (2.0 * real.len() as f64 * fake.len() as f64))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fake-positive F1 from a `[true][predicted]` detection confusion, as
/// `2TP / (2TP + FP + FN)`; zero when there are no true positives.
pub fn f1_from_confusion(c: &[[u64; 2]; 2]) -> f64 {
    let tp = c[1][1];
    ratio(2 * tp, 2 * tp + c[0][1] + c[1][0])
}

pub fn compute_metrics(
    samples: &[ScoredSample],
    num_classes: usize,
    threshold: f64,
    split: Split,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let mut detect = [[0u64; 2]; 2];
    let mut attr = vec![vec![0u64; num_classes]; num_classes];
    let mut per_class = vec![(0u64, 0u64); num_classes];
    for s in samples {
        let (g, p) = (s.g as usize, s.attr_pred as usize);
        if g >= num_classes || p >= num_classes || s.y > 1 {
            return Err(Error::InvalidArgument(format!(
                "{}: label y={} g={} / prediction {} outside {num_classes} classes",
                s.source_id, s.y, s.g, s.attr_pred
            )));
        }
        let pred_fake = s.prob >= threshold;
        detect[s.y as usize][pred_fake as usize] += 1;
        attr[g][p] += 1;
        per_class[g].1 += 1;
        if pred_fake == (s.y == 1) {
            per_class[g].0 += 1;
        }
    }
    let real_accuracy = ratio(detect[0][0], detect[0][0] + detect[0][1]);
    let fake_accuracy = ratio(detect[1][1], detect[1][0] + detect[1][1]);
    let diagonal: u64 = (0..num_classes).map(|k| attr[k][k]).sum();
    let real: Vec<f64> = samples.iter().filter(|s| s.y == 0).map(|s| s.prob).collect();
    let fake: Vec<f64> = samples.iter().filter(|s| s.y == 1).map(|s| s.prob).collect();
    let auc = auc(&real, &fake);
    let mut notes = Vec::new();
    if real.is_empty() || fake.is_empty() {
        notes.push(format!(
            "AUC undefined: split has {} real and {} fake samples",
            real.len(),
            fake.len()
        ));
    } else if auc.is_none() {
        notes.push("AUC undefined: non-finite detection scores".into());
    }
    Ok(MetricsReport {
        split,
        num_samples: samples.len(),
        threshold,
        balanced_accuracy: (real_accuracy + fake_accuracy) / 2.0,
        auc,
        f1: f1_from_confusion(&detect),
        real_accuracy,
        fake_accuracy,
        attribution_accuracy: ratio(diagonal, samples.len() as u64),
        detect_confusion: detect,
        attr_confusion: attr,
        per_generator_detection: per_class
            .iter()
            .enumerate()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(g, &(ok, n))| (g as u32, ratio(ok, n)))
            .collect(),
        notes,
    })
}
