//! The seeded training loop: forward, five losses, clipped AdamW step, EMA
//! centroid update, per-epoch cosine decay, validation and checkpoints.

pub mod checkpoint;
pub mod optim;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Ablation, RunConfig};
use crate::datapipe::{load_sample, make_weighted_sampler, CachedReader, DatasetManifest, MelExtractor, Split};
use crate::error::{Error, Result};
use crate::evalkit::{self, MetricsReport};
use crate::losses::{compute_terms, total_loss, CentroidTable, LossBreakdown};
use crate::model::{Batch, Mode, Model};
use crate::rng;

pub use checkpoint::{LoadedCheckpoint, TrainState};
pub use optim::{clip_gradients, cosine_lr, global_norm, AdamW, AdamWConfig};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const LAST_DIR: &str = "last";
pub const BEST_DIR: &str = "best";
pub const FINAL_DIR: &str = "final";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    /// Mean of the step breakdowns.
    pub mean: LossBreakdown,
    /// Mean number of generator groups in the fingerprint term per step.
    pub fingerprint_groups: f64,
    pub val_balanced_accuracy: Option<f64>,
    pub val_attribution_accuracy: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step(StepRecord),
    Epoch(EpochRecord),
}

impl LogRecord {
    pub fn epoch(&self) -> usize {
        match self {
            LogRecord::Step(s) => s.epoch,
            LogRecord::Epoch(e) => e.epoch,
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from this checkpoint; its configuration replaces the given one.
    pub resume_from: Option<PathBuf>,
    /// Stop after this many epochs in total, leaving a resumable `last`
    /// checkpoint (simulates an interrupted run).
    pub stop_after_epochs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub log_path: PathBuf,
    pub final_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
    pub last_checkpoint: PathBuf,
    pub epochs: Vec<EpochRecord>,
    pub global_step: u64,
}

struct LogWriter {
    file: fs::File,
    path: PathBuf,
}

impl LogWriter {
    fn open(path: &Path, keep_before_epoch: Option<usize>) -> Result<Self> {
        let kept = match keep_before_epoch {
            Some(e) if path.exists() => read_log(path)?.into_iter().filter(|r| r.epoch() < e).collect(),
            _ => Vec::new(),
        };
        let mut w = Self {
            file: fs::File::create(path).map_err(|e| Error::io(path, e))?,
            path: path.into(),
        };
        for r in &kept {
            w.write(r)?;
        }
        Ok(w)
    }

    fn write(&mut self, record: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::json(&self.path, e))?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains with `disable` switched off; an empty set is plain training.
pub fn ablate(
    manifest: &DatasetManifest,
    config: &RunConfig,
    disable: &[Ablation],
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let mut cfg = config.clone();
    cfg.apply_ablations(disable);
    train(manifest, &cfg, out_dir, &TrainOptions::default())
}

fn grads_of(model: &Model, grads: &candle_core::backprop::GradStore) -> Result<Vec<Vec<f32>>> {
    model
        .store
        .vars()
        .iter()
        .map(|(_, var)| match grads.get(var.as_tensor()) {
            Some(g) => Ok(g.flatten_all()?.to_vec1::<f32>()?),
            None => Ok(vec![0.0; var.elem_count()]),
        })
        .collect()
}

fn params_of(model: &Model) -> Result<Vec<Vec<f32>>> {
    model.store.vars().iter().map(|(n, _)| model.store.values(n)).collect()
}

fn write_params(model: &Model, params: &[Vec<f32>]) -> Result<()> {
    for ((name, _), p) in model.store.vars().iter().zip(params) {
        model.store.set_values(name, p)?;
    }
    Ok(())
}

fn diverged(step: u64, e: Error) -> Error {
    match e {
        Error::NonFinite(component) => Error::Diverged { step, component },
        other => other,
    }
}

pub fn train(manifest: &DatasetManifest, config: &RunConfig, out_dir: &Path, opts: &TrainOptions) -> Result<TrainOutcome> {
    let (model, config, mut optimizer, mut centroids, mut state) = match &opts.resume_from {
        Some(dir) => {
            let c = checkpoint::load(dir)?;
            (c.model, c.config, c.optimizer, c.centroids, c.state)
        }
        None => {
            let mut config = config.clone();
            config.apply_ablations(&[]);
            config.model.num_generators = manifest.num_generators();
            config.validate()?;
            let model = Model::new(&config.model, config.data.frames, config.train.seed)?;
            let sizes: Vec<usize> = model.store.vars().iter().map(|(_, v)| v.elem_count()).collect();
            let t = &config.train;
            let optimizer = AdamW::new(
                AdamWConfig {
                    weight_decay: t.weight_decay,
                    beta1: t.beta1,
                    beta2: t.beta2,
                    eps: t.adam_eps,
                },
                &sizes,
            );
            let centroids = CentroidTable::zeros(config.model.num_classes(), 2 * config.model.embed_dim);
            let state = TrainState {
                next_epoch: 0,
                global_step: 0,
                best_val_balanced_accuracy: None,
                best_epoch: None,
                metrics: None,
                num_params: model.store.num_params(),
            };
            (model, config, optimizer, centroids, state)
        }
    };
    if manifest.num_generators() != config.model.num_generators {
        return Err(Error::Config(format!(
            "manifest has {} generators, model was built for {}",
            manifest.num_generators(),
            config.model.num_generators
        )));
    }
    let train_entries = manifest.split(Split::Train);
    if train_entries.is_empty() {
        return Err(Error::InvalidArgument("train split is empty".into()));
    }
    let has_val = !manifest.split(Split::Val).is_empty();
    let sampler = make_weighted_sampler(manifest)?;
    let extractor = MelExtractor::new();
    let reader = CachedReader;

    crate::binio::create_dir(out_dir)?;
    config.save(&out_dir.join("config.toml"))?;
    let log_path = out_dir.join(LOG_FILE);
    let mut log = LogWriter::open(&log_path, opts.resume_from.as_ref().map(|_| state.next_epoch))?;

    let t = config.train.clone();
    let steps_per_epoch = train_entries.len().div_ceil(t.batch_size);
    let stop = opts.stop_after_epochs.unwrap_or(t.epochs).min(t.epochs);
    let last_dir = out_dir.join(LAST_DIR);
    let best_dir = out_dir.join(BEST_DIR);
    let mut epochs = Vec::new();
    let mut params = params_of(&model)?;

    for epoch in state.next_epoch..stop {
        let lr = cosine_lr(t.learning_rate, epoch, t.epochs);
        let mut epoch_rng = rng::stream(t.seed, "sampler", &[epoch as u64]);
        let order = sampler.draw(steps_per_epoch * t.batch_size, &mut epoch_rng);
        let mut sums = [0f64; 6];
        let mut groups = 0usize;
        for (b, chunk) in order.chunks(t.batch_size).enumerate() {
            let step = state.global_step;
            let samples = chunk
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let pos = (b * t.batch_size + j) as u64;
                    let mut aug = rng::stream(t.seed, "augment", &[epoch as u64, pos]);
                    load_sample(manifest, &manifest.entries[i], &config.data, &reader, &extractor, Some(&mut aug))
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = Batch::from_samples(&samples, model.device())?;
            let mut dropout = rng::stream(t.seed, "dropout", &[step]);
            let forward = model.forward(&batch, Mode::Train(&mut dropout))?;
            let (terms, telemetry) = compute_terms(&forward, &batch, &centroids, &config.loss)?;
            let (total, breakdown) = total_loss(&terms, &config.loss).map_err(|e| diverged(step, e))?;
            let mut grads = grads_of(&model, &total.backward()?)?;
            clip_gradients(&mut grads, t.clip_norm).map_err(|_| Error::Diverged {
                step,
                component: "gradient".into(),
            })?;
            optimizer.step(&mut params, &grads, lr)?;
            write_params(&model, &params)?;
            centroids.update(&forward.embeddings.z_f.detach(), &batch.g, config.loss.momentum)?;

            for (s, v) in sums.iter_mut().zip([
                breakdown.det,
                breakdown.attr,
                breakdown.cont,
                breakdown.fp,
                breakdown.cen,
                breakdown.total,
            ]) {
                *s += v;
            }
            groups += telemetry.fingerprint_groups;
            log.write(&LogRecord::Step(StepRecord {
                step,
                epoch,
                lr,
                losses: breakdown,
            }))?;
            state.global_step += 1;
        }

        let n = steps_per_epoch as f64;
        let mean = LossBreakdown {
            det: sums[0] / n,
            attr: sums[1] / n,
            cont: sums[2] / n,
            fp: sums[3] / n,
            cen: sums[4] / n,
            total: sums[5] / n,
        };
        let validate = has_val && ((epoch + 1) % t.eval_every == 0 || epoch + 1 == t.epochs);
        let report = if validate {
            Some(validation(&model, manifest, &config)?)
        } else {
            None
        };
        state.next_epoch = epoch + 1;
        let mut improved = false;
        if let Some(r) = &report {
            if state.best_val_balanced_accuracy.is_none_or(|b| r.balanced_accuracy > b) {
                state.best_val_balanced_accuracy = Some(r.balanced_accuracy);
                state.best_epoch = Some(epoch);
                improved = true;
            }
            state.metrics = Some(r.clone());
        }
        let record = EpochRecord {
            epoch,
            lr,
            steps: steps_per_epoch,
            mean,
            fingerprint_groups: groups as f64 / n,
            val_balanced_accuracy: report.as_ref().map(|r| r.balanced_accuracy),
            val_attribution_accuracy: report.as_ref().map(|r| r.attribution_accuracy),
            val_auc: report.as_ref().and_then(|r| r.auc),
        };
        log.write(&LogRecord::Epoch(record.clone()))?;
        log::info!(
            "epoch {epoch}: lr {lr:.3e} loss {:.4} val BA {:?} attr {:?}",
            mean.total,
            record.val_balanced_accuracy,
            record.val_attribution_accuracy
        );
        epochs.push(record);
        checkpoint::save(&last_dir, &model, &config, &optimizer, &centroids, &state)?;
        if improved {
            checkpoint::save(&best_dir, &model, &config, &optimizer, &centroids, &state)?;
        }
    }

    let finished = state.next_epoch >= t.epochs;
    let final_checkpoint = if finished {
        let dir = out_dir.join(FINAL_DIR);
        checkpoint::save(&dir, &model, &config, &optimizer, &centroids, &state)?;
        Some(dir)
    } else {
        None
    };
    Ok(TrainOutcome {
        out_dir: out_dir.into(),
        log_path,
        final_checkpoint,
        best_checkpoint: best_dir.is_dir().then_some(best_dir),
        last_checkpoint: last_dir,
        epochs,
        global_step: state.global_step,
    })
}


fn validation(model: &Model, manifest: &DatasetManifest, config: &RunConfig) -> Result<MetricsReport> {
    let rows = evalkit::run_inference(model, manifest, Split::Val, &config.data, config.eval.batch_size)?;
    Ok(evalkit::summarize(rows, config.model.num_classes(), config.eval.threshold, Split::Val)?.report)
}
