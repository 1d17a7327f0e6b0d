use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-class statistics of `(g, cosine)` pairs.
pub fn similarity_by_class(pairs: impl IntoIterator<Item = (u32, f64)>) -> BTreeMap<u32, SimilarityStats> {
    let mut by: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (g, c) in pairs {
        by.entry(g).or_default().push(c);
    }
    by.into_iter()
        .map(|(g, v)| {
            let (mean, std) = mean_std(&v);
            (g, SimilarityStats { mean, std, count: v.len() })
        })
        .collect()
}

/// Count-weighted mean over every fake class.
pub fn fake_mean(stats: &BTreeMap<u32, SimilarityStats>) -> Option<f64> {
    let (sum, n) = stats
        .iter()
        .filter(|(g, _)| **g > 0)
        .fold((0.0, 0usize), |(s, n), (_, st)| (s + st.mean * st.count as f64, n + st.count));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn self_and_orthogonal() {
        let s = similarity_by_class([(0, cosine(&[0.6, 0.8], &[0.6, 0.8])), (0, 1.0)]);
        assert!((s[&0].mean - 1.0).abs() < 1e-12 && s[&0].std < 1e-7);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
    }

    #[test]
    fn random_directions_concentrate() {
        let mut rng = crate::rng::stream(3, "test", &[]);
        let p = 64;
        let mut draw = || -> Vec<f32> { (0..p).map(|_| rng.sample::<f32, _>(StandardNormal)).collect() };
        let cs: Vec<(u32, f64)> = (0..10_000).map(|_| (1, cosine(&draw(), &draw()))).collect();
        let s = similarity_by_class(cs);
        assert!(s[&1].mean.abs() < 0.01, "{:?}", s[&1]);
        assert!((s[&1].std - 1.0 / (p as f64).sqrt()).abs() < 0.01, "{:?}", s[&1]);
    }
}
