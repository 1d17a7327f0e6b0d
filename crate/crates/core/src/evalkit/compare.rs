use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 6] = ["bal_acc", "auc", "f1", "real", "fake", "attr"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// Column order follows [`COLUMNS`]; `None` marks an absent metric.
    pub values: [Option<f64>; 6],
    /// Difference from the first (reference) variant.
    pub deltas: [Option<f64>; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn columns(r: &MetricsReport) -> [Option<f64>; 6] {
    [
        Some(r.balanced_accuracy),
        r.auc,
        Some(r.f1),
        Some(r.real_accuracy),
        Some(r.fake_accuracy),
        Some(r.attribution_accuracy),
    ]
}

/// Table of every variant against the first one.
pub fn compare_ablations(reports: &[(String, MetricsReport)]) -> Result<AblationTable> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an ablation comparison needs at least two reports, got {}",
            reports.len()
        )));
    }
    let reference = columns(&reports[0].1);
    let rows = reports
        .iter()
        .map(|(name, r)| {
            let values = columns(r);
            let mut deltas = [None; 6];
            for (d, (v, b)) in deltas.iter_mut().zip(values.iter().zip(&reference)) {
                *d = v.zip(*b).map(|(v, b)| v - b);
            }
            AblationRow {
                variant: name.clone(),
                values,
                deltas,
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

impl AblationTable {
    /// Fixed-width text, metrics in percent.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.variant.len()).max().unwrap_or(0).max(7);
        let mut out = format!("{:<width$}", "variant");
        for c in COLUMNS {
            let _ = write!(out, " {c:>8}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<width$}", row.variant);
            for v in row.values {
                match v {
                    Some(v) => {
                        let _ = write!(out, " {:>8.1}", 100.0 * v);
                    }
                    None => {
                        let _ = write!(out, " {:>8}", "n/a");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::Split;
    use crate::evalkit::metrics::{compute_metrics, ScoredSample};

    fn report(fake_prob: f64) -> MetricsReport {
        let s = [(0u8, 0u32, 0.1), (1, 1, fake_prob)].map(|(y, g, prob)| ScoredSample {
            source_id: String::new(),
            y,
            g,
            prob,
            attr_pred: g,
        });
        compute_metrics(&s, 2, 0.5, Split::Test).unwrap()
    }

    #[test]
    fn deltas_against_reference() {
        let t = compare_ablations(&[("full".into(), report(0.9)), ("ablated".into(), report(0.3))]).unwrap();
        assert_eq!(t.rows[0].deltas, [Some(0.0); 6]);
        assert_eq!(t.rows[1].deltas[0], Some(-0.5));
        assert!(t.render().contains("ablated"));
        assert!(compare_ablations(&[("one".into(), report(0.9))]).is_err());
    }

    #[test]
    fn absent_metrics_stay_absent() {
        let mut r = report(0.9);
        r.auc = None;
        let t = compare_ablations(&[("a".into(), report(0.9)), ("b".into(), r)]).unwrap();
        assert_eq!(t.rows[1].values[1], None);
        assert_eq!(t.rows[1].deltas[1], None);
        assert!(t.render().contains("n/a"));
    }
}
