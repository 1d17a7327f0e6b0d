use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::infer::InferenceRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    #[serde(rename = "z_v")]
    Zv,
    #[serde(rename = "z_a")]
    Za,
    #[serde(rename = "z_f")]
    Zf,
    #[serde(rename = "p_v")]
    Pv,
    #[serde(rename = "p_a")]
    Pa,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 5] = [Self::Zv, Self::Za, Self::Zf, Self::Pv, Self::Pa];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Zv => "z_v",
            Self::Za => "z_a",
            Self::Zf => "z_f",
            Self::Pv => "p_v",
            Self::Pa => "p_a",
        }
    }

    pub fn select(self, row: &InferenceRow) -> &[f32] {
        match self {
            Self::Zv => &row.z_v,
            Self::Za => &row.z_a,
            Self::Zf => &row.z_f,
            Self::Pv => &row.p_v,
            Self::Pa => &row.p_a,
        }
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown representation {s:?} (expected z_v, z_a, z_f, p_v or p_a)"))
        })
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Header `source_id  y  g  d0 .. d{n-1}`, then one tab-separated row per
/// clip with six significant digits per component.
pub fn embeddings_tsv(rows: &[InferenceRow], kind: EmbeddingKind) -> String {
    let width = rows.first().map_or(0, |r| kind.select(r).len());
    let mut out = String::from("source_id\ty\tg");
    for d in 0..width {
        let _ = write!(out, "\td{d}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}", r.source_id, r.y, r.g);
        for v in kind.select(r) {
            let _ = write!(out, "\t{v:.5e}");
        }
        out.push('\n');
    }
    out
}

pub fn write_embeddings(path: &Path, rows: &[InferenceRow], kind: EmbeddingKind) -> Result<()> {
    std::fs::write(path, embeddings_tsv(rows, kind)).map_err(|e| Error::io(path, e))
}

/// `source_id  y  g  prob  attr_pred` per clip.
pub fn scores_tsv(rows: &[InferenceRow]) -> String {
    let mut out = String::from("source_id\ty\tg\tprob\tattr_pred\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{:.6e}\t{}", r.source_id, r.y, r.g, r.prob, r.attr_pred);
    }
    out
}

/// Inverse of [`scores_tsv`]: `(y, g, prob)` per row.
pub fn parse_scores_tsv(text: &str) -> Result<Vec<(u8, u32, f64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || Error::InvalidArgument(format!("scores line {}: malformed row {line:?}", n + 1));
        if cols.len() < 4 {
            return Err(bad());
        }
        out.push((
            cols[1].parse().map_err(|_| bad())?,
            cols[2].parse().map_err(|_| bad())?,
            cols[3].parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}
