//! Class-balancing weighted sampler over the training split.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::datapipe::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone)]
pub struct WeightedSampler {
    /// Indices into `manifest.entries` of the training split.
    pub entries: Vec<usize>,
    /// Unnormalized weight `1 / count(class)` per training entry.
    pub weights: Vec<f64>,
    dist: WeightedIndex<f64>,
}

pub fn make_weighted_sampler(manifest: &DatasetManifest) -> Result<WeightedSampler> {
    let entries: Vec<usize> = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if entries.is_empty() {
        return Err(Error::InvalidArgument("train split is empty".into()));
    }
    let counts = manifest.class_counts(Split::Train);
    let weights: Vec<f64> = entries
        .iter()
        .map(|&i| 1.0 / counts[&manifest.entries[i].g] as f64)
        .collect();
    WeightedSampler::new(entries, weights)
}

impl WeightedSampler {
    pub fn new(entries: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("sampling weights: {e}")))?;
        Ok(Self {
            entries,
            weights,
            dist,
        })
    }

    /// Draws `n` manifest entry indices with replacement.
    pub fn draw(&self, n: usize, rng: &mut StreamRng) -> Vec<usize> {
        (0..n).map(|_| self.entries[self.dist.sample(rng)]).collect()
    }

    /// Expected sampling frequency of each class.
    pub fn expected_class_frequencies(&self, manifest: &DatasetManifest) -> BTreeMap<u32, f64> {
        let total: f64 = self.weights.iter().sum();
        let mut out = BTreeMap::new();
        for (&i, &w) in self.entries.iter().zip(&self.weights) {
            *out.entry(manifest.entries[i].g).or_insert(0.0) += w / total;
        }
        out
    }
}
