//! Detection and attribution metrics, cross-modal similarity, embedding
//! export, ablation comparison and plots.

pub mod compare;
pub mod export;
pub mod infer;
pub mod metrics;
pub mod plot;
pub mod similarity;

use std::collections::BTreeMap;
use std::path::Path;

pub use compare::{compare_ablations, AblationRow, AblationTable};
pub use export::{embeddings_tsv, scores_tsv, write_embeddings, EmbeddingKind};
pub use infer::{run_inference, InferenceRow};
pub use metrics::{auc, compute_metrics, f1_from_confusion, MetricsReport, ScoredSample};
pub use similarity::{cosine, fake_mean, similarity_by_class, SimilarityStats};

use crate::datapipe::{DatasetManifest, Split};
use crate::error::Result;
use crate::trainer::checkpoint;

/// Everything `evaluate` produces for one split.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub similarity: BTreeMap<u32, SimilarityStats>,
    pub rows: Vec<InferenceRow>,
}

pub fn summarize(rows: Vec<InferenceRow>, num_classes: usize, threshold: f64, split: Split) -> Result<Evaluation> {
    let scored: Vec<ScoredSample> = rows.iter().map(InferenceRow::scored).collect();
    let report = compute_metrics(&scored, num_classes, threshold, split)?;
    let similarity = similarity_by_class(rows.iter().map(|r| (r.g, r.cross_modal_cosine())));
    Ok(Evaluation {
        report,
        similarity,
        rows,
    })
}

/// Loads the checkpoint at `dir` and evaluates it on `split`.
pub fn evaluate(dir: &Path, manifest: &DatasetManifest, split: Split, threshold: f64) -> Result<Evaluation> {
    let (model, config) = checkpoint::load_model(dir)?;
    let rows = run_inference(&model, manifest, split, &config.data, config.eval.batch_size)?;
    summarize(rows, model.config.num_classes(), threshold, split)
}
