//! Per-class prototypes in fused-embedding space, tracked by EMA.

use candle_core::{DType, Tensor, D};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTable {
    pub classes: usize,
    pub dim: usize,
    /// Row-major `[classes, dim]`.
    pub values: Vec<f32>,
    pub updated: Vec<bool>,
}

impl CentroidTable {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            values: vec![0.0; classes * dim],
            updated: vec![false; classes],
        }
    }

    pub fn row(&self, class: usize) -> &[f32] {
        &self.values[class * self.dim..(class + 1) * self.dim]
    }

    pub fn as_tensor(&self, dtype: DType, device: &candle_core::Device) -> Result<Tensor> {
        Ok(Tensor::from_slice(&self.values, (self.classes, self.dim), device)?.to_dtype(dtype)?)
    }

    /// `C[k] <- m C[k] + (1 - m) mean(z_f rows of class k)` for each class
    /// present in the batch; absent classes are untouched.
    pub fn update(&mut self, z_f: &Tensor, g: &[u32], momentum: f64) -> Result<()> {
        let rows: Vec<Vec<f64>> = z_f.to_dtype(DType::F64)?.to_vec2()?;
        if rows.len() != g.len() {
            return Err(Error::Shape(format!("{} embeddings for {} labels", rows.len(), g.len())));
        }
        let mut sums = vec![0f64; self.classes * self.dim];
        let mut counts = vec![0usize; self.classes];
        for (row, &c) in rows.iter().zip(g) {
            let c = c as usize;
            if c >= self.classes || row.len() != self.dim {
                return Err(Error::Shape(format!(
                    "class {c} / width {} for a {}x{} centroid table",
                    row.len(),
                    self.classes,
                    self.dim
                )));
            }
            counts[c] += 1;
            for (s, v) in sums[c * self.dim..(c + 1) * self.dim].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in (0..self.classes).filter(|&c| counts[c] > 0) {
            let n = counts[c] as f64;
            let range = c * self.dim..(c + 1) * self.dim;
            for (v, s) in self.values[range.clone()].iter_mut().zip(&sums[range]) {
                *v = (momentum * f64::from(*v) + (1.0 - momentum) * (s / n)) as f32;
            }
            self.updated[c] = true;
        }
        Ok(())
    }
}

/// Mean squared distance of each embedding to its class centroid. The table
/// is a constant: no gradient reaches it. With `only_seen`, samples whose
/// class was never updated are left out (zero when none remain).
pub fn centroid_loss(z_f: &Tensor, g: &[u32], table: &CentroidTable, only_seen: bool) -> Result<Tensor> {
    let (b, d) = z_f.dims2()?;
    if b != g.len() || d != table.dim {
        return Err(Error::Shape(format!(
            "centroid loss over {:?} with {} labels and width {}",
            z_f.dims(),
            g.len(),
            table.dim
        )));
    }
    let keep: Vec<u32> = (0..b as u32)
        .filter(|&i| !only_seen || table.updated[g[i as usize] as usize])
        .collect();
    if keep.is_empty() {
        return Ok(Tensor::zeros((), z_f.dtype(), z_f.device())?);
    }
    let centroids = table.as_tensor(z_f.dtype(), z_f.device())?;
    let classes: Vec<u32> = keep.iter().map(|&i| g[i as usize]).collect();
    let targets = centroids.index_select(&Tensor::from_slice(&classes, classes.len(), z_f.device())?, 0)?;
    let z = if keep.len() == b {
        z_f.clone()
    } else {
        z_f.index_select(&Tensor::from_slice(&keep, keep.len(), z_f.device())?, 0)?
    };
    Ok((z - targets)?.sqr()?.sum(D::Minus1)?.mean_all()?)
}
