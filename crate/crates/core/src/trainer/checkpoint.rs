//! Checkpoint directory layout:
//!
//! ```text
//! weights.bin       every parameter, float32 little-endian, creation order
//! weights.json      name, shape and offset of each parameter
//! optimizer.bin     AdamW first then second moments, same order
//! optimizer.json    step count and hyperparameters
//! centroids.bin     [classes, dim] float32 little-endian
//! centroids.json    shape and per-class update flags
//! state.json        schedule position and metrics snapshot
//! config.toml       the complete run configuration
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use crate::binio;
use crate::config::{Preset, RunConfig};
use crate::error::{Error, Result};
use crate::evalkit::MetricsReport;
use crate::losses::CentroidTable;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightsManifest {
    dtype: String,
    params: Vec<ParamRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerMeta {
    step: u64,
    config: AdamWConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CentroidMeta {
    classes: usize,
    dim: usize,
    updated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// First epoch a resumed run executes.
    pub next_epoch: usize,
    pub global_step: u64,
    pub best_val_balanced_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Validation report of the last validated epoch.
    pub metrics: Option<MetricsReport>,
    pub num_params: usize,
}

pub struct LoadedCheckpoint {
    pub model: Model,
    pub config: RunConfig,
    pub optimizer: AdamW,
    pub centroids: CentroidTable,
    pub state: TrainState,
}

fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Writes into a sibling temporary directory, then swaps it into place.
pub fn save(
    dir: &Path,
    model: &Model,
    config: &RunConfig,
    optimizer: &AdamW,
    centroids: &CentroidTable,
    state: &TrainState,
) -> Result<()> {
    let tmp = dir.with_extension("partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    binio::create_dir(&tmp)?;

    let mut flat = Vec::new();
    let mut records = Vec::new();
    for (name, var) in model.store.vars() {
        let values = model.store.values(name)?;
        records.push(ParamRecord {
            name: name.clone(),
            shape: var.dims().to_vec(),
            offset: flat.len(),
            len: values.len(),
        });
        flat.extend_from_slice(&values);
    }
    binio::write_f32(&join(&tmp, "weights.bin"), &flat)?;
    binio::write_json(
        &join(&tmp, "weights.json"),
        &WeightsManifest {
            dtype: "float32-le".into(),
            params: records,
        },
    )?;

    let moments: Vec<f32> = optimizer.m.iter().chain(&optimizer.v).flatten().copied().collect();
    binio::write_f32(&join(&tmp, "optimizer.bin"), &moments)?;
    binio::write_json(
        &join(&tmp, "optimizer.json"),
        &OptimizerMeta {
            step: optimizer.step,
            config: optimizer.config,
        },
    )?;

    binio::write_f32(&join(&tmp, "centroids.bin"), &centroids.values)?;
    binio::write_json(
        &join(&tmp, "centroids.json"),
        &CentroidMeta {
            classes: centroids.classes,
            dim: centroids.dim,
            updated: centroids.updated.clone(),
        },
    )?;
    binio::write_json(&join(&tmp, "state.json"), state)?;
    config.save(&join(&tmp, "config.toml"))?;

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn corrupt(dir: &Path, reason: String) -> Error {
    Error::Media {
        path: dir.into(),
        reason,
    }
}

/// Rebuilds the model from `config.toml` and overwrites its weights.
pub fn load_model(dir: &Path) -> Result<(Model, RunConfig)> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("no checkpoint directory at {}", dir.display())));
    }
    let config = RunConfig::load(&join(dir, "config.toml"), Preset::Desk)?;
    let model = Model::new(&config.model, config.data.frames, config.train.seed)?;
    let manifest: WeightsManifest = binio::read_json(&join(dir, "weights.json"))?;
    let flat = binio::read_f32(&join(dir, "weights.bin"))?;
    let vars = model.store.vars();
    if manifest.params.len() != vars.len() {
        return Err(corrupt(
            dir,
            format!("{} stored parameters, model has {}", manifest.params.len(), vars.len()),
        ));
    }
    for (rec, (name, var)) in manifest.params.iter().zip(vars) {
        if &rec.name != name || rec.shape != var.dims() || rec.offset + rec.len > flat.len() {
            return Err(corrupt(dir, format!("parameter {} {:?} does not match {name} {:?}", rec.name, rec.shape, var.dims())));
        }
        model.store.set_values(name, &flat[rec.offset..rec.offset + rec.len])?;
    }
    Ok((model, config))
}

pub fn load(dir: &Path) -> Result<LoadedCheckpoint> {
    let (model, config) = load_model(dir)?;
    let sizes: Vec<usize> = model.store.vars().iter().map(|(_, v)| v.elem_count()).collect();
    let meta: OptimizerMeta = binio::read_json(&join(dir, "optimizer.json"))?;
    let moments = binio::read_f32(&join(dir, "optimizer.bin"))?;
    let total: usize = sizes.iter().sum();
    if moments.len() != 2 * total {
        return Err(corrupt(dir, format!("{} optimizer values for {total} parameters", moments.len())));
    }
    let mut optimizer = AdamW::new(meta.config, &sizes);
    optimizer.step = meta.step;
    let mut at = 0;
    for slot in optimizer.m.iter_mut().chain(optimizer.v.iter_mut()) {
        let n = slot.len();
        slot.copy_from_slice(&moments[at..at + n]);
        at += n;
    }
    let cmeta: CentroidMeta = binio::read_json(&join(dir, "centroids.json"))?;
    let values = binio::read_f32(&join(dir, "centroids.bin"))?;
    if values.len() != cmeta.classes * cmeta.dim || cmeta.updated.len() != cmeta.classes {
        return Err(corrupt(dir, "centroid table does not match its shape".into()));
    }
    let centroids = CentroidTable {
        classes: cmeta.classes,
        dim: cmeta.dim,
        values,
        updated: cmeta.updated,
    };
    let state: TrainState = binio::read_json(&join(dir, "state.json"))?;
    Ok(LoadedCheckpoint {
        model,
        config,
        optimizer,
        centroids,
        state,
    })
}
