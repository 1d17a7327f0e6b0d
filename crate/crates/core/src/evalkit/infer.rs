use crate::datapipe::{load_sample, CachedReader, DataConfig, DatasetManifest, MelExtractor, MediaReader, Split};
use crate::error::{Error, Result};
use crate::model::{Batch, Mode, Model};

use super::metrics::ScoredSample;

/// Evaluation-mode outputs and embeddings of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRow {
    pub source_id: String,
    pub y: u8,
    pub g: u32,
    pub prob: f64,
    pub attr_pred: u32,
    pub attr_probs: Vec<f32>,
    pub z_v: Vec<f32>,
    pub z_a: Vec<f32>,
    pub z_f: Vec<f32>,
    pub p_v: Vec<f32>,
    pub p_a: Vec<f32>,
}

impl InferenceRow {
    pub fn scored(&self) -> ScoredSample {
        ScoredSample {
            source_id: self.source_id.clone(),
            y: self.y,
            g: self.g,
            prob: self.prob,
            attr_pred: self.attr_pred,
        }
    }

    pub fn cross_modal_cosine(&self) -> f64 {
        super::similarity::cosine(&self.p_v, &self.p_a)
    }
}

fn argmax(v: &[f32]) -> u32 {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best as u32
}

/// Runs the model without augmentation or dropout over every clip of
/// `split`, in manifest order.
pub fn run_inference(
    model: &Model,
    manifest: &DatasetManifest,
    split: Split,
    data: &DataConfig,
    batch_size: usize,
) -> Result<Vec<InferenceRow>> {
    run_inference_with(model, manifest, split, data, batch_size, &CachedReader)
}

pub fn run_inference_with(
    model: &Model,
    manifest: &DatasetManifest,
    split: Split,
    data: &DataConfig,
    batch_size: usize,
    reader: &dyn MediaReader,
) -> Result<Vec<InferenceRow>> {
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(Error::InvalidArgument(format!("split {split} is empty")));
    }
    let extractor = MelExtractor::new();
    let mut rows = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(batch_size.max(1)) {
        let samples = chunk
            .iter()
            .map(|e| load_sample(manifest, e, data, reader, &extractor, None))
            .collect::<Result<Vec<_>>>()?;
        let batch = Batch::from_samples(&samples, model.device())?;
        let out = model.forward(&batch, Mode::Eval)?;
        let prob: Vec<f32> = out.heads.detect_prob.to_vec1()?;
        let attr: Vec<Vec<f32>> = out.heads.attr_probs.to_vec2()?;
        let e = &out.embeddings;
        let [z_v, z_a, z_f, p_v, p_a] = [&e.z_v, &e.z_a, &e.z_f, &e.p_v, &e.p_a].map(|t| t.to_vec2::<f32>());
        let (z_v, z_a, z_f, p_v, p_a) = (z_v?, z_a?, z_f?, p_v?, p_a?);
        for (i, s) in samples.iter().enumerate() {
            rows.push(InferenceRow {
                source_id: s.source_id.clone(),
                y: s.y,
                g: s.g,
                prob: f64::from(prob[i]),
                attr_pred: argmax(&attr[i]),
                attr_probs: attr[i].clone(),
                z_v: z_v[i].clone(),
                z_a: z_a[i].clone(),
                z_f: z_f[i].clone(),
                p_v: p_v[i].clone(),
                p_a: p_a[i].clone(),
            });
        }
    }
    Ok(rows)
}
