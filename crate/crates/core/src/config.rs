//! Run configuration: one nested TOML document layered over a scale preset.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datapipe::{DataConfig, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

/// Components that can be switched off for an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Attr,
    Cont,
    Fp,
    Cen,
    CmaModule,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::Attr, Ablation::Cont, Ablation::Fp, Ablation::Cen, Ablation::CmaModule];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Attr => "attr",
            Ablation::Cont => "cont",
            Ablation::Fp => "fp",
            Ablation::Cen => "cen",
            Ablation::CmaModule => "cma_module",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown ablation {s:?} (expected one of attr, cont, fp, cen, cma_module)"
                ))
            })
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient norm bound.
    pub clip_norm: f64,
    pub seed: u64,
    /// Epochs between validation passes; the last epoch is always validated.
    pub eval_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Switched-off components.
    pub ablate: Vec<Ablation>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            epochs: 50,
            batch_size: 4,
            clip_norm: 1.0,
            seed: 0,
            eval_every: 1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            ablate: Vec::new(),
        }
    }
}

impl TrainConfig {
    /// Shorter, faster schedule for the CPU-scale preset.
    pub fn desk() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 25,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("clip_norm", self.clip_norm),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("epochs", self.epochs), ("batch_size", self.batch_size), ("eval_every", self.eval_every)] {
            if v == 0 {
                return Err(Error::Config(format!("train.{name} must be positive")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("train.{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Detection decision: fake when `prob >= threshold`.
    pub threshold: f64,
    pub split: Split,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            split: Split::Test,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                data: DataConfig::desk(),
                synth: SynthConfig::default(),
                model: ModelConfig::desk(),
                loss: LossWeights::default(),
                train: TrainConfig::desk(),
                eval: EvalConfig::default(),
            },
            Preset::Paper => Self {
                data: DataConfig::paper(),
                synth: SynthConfig {
                    frames: 16,
                    frame_size: 224,
                    ..SynthConfig::default()
                },
                model: ModelConfig::paper(),
                train: TrainConfig::default(),
                ..Self::preset(Preset::Desk)
            },
        }
    }

    /// Parses `text` over `preset`. Keys absent from the preset are rejected
    /// with their full dotted path.
    pub fn from_toml_str(text: &str, preset: Preset) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {}", e.message())))?;
        let mut base = toml::Table::try_from(Self::preset(preset))
            .map_err(|e| Error::Config(format!("cannot serialize preset: {e}")))?;
        merge(&mut base, user, "")?;
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, preset).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.model.encoder_config(self.data.frames).validate()?;
        if self.data.frames == 0 || self.data.frame_size == 0 {
            return Err(Error::Config("data.frames and data.frame_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(Error::Config(format!("eval.threshold must lie in [0, 1], got {}", self.eval.threshold)));
        }
        if self.eval.batch_size == 0 {
            return Err(Error::Config("eval.batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::Config(format!("model.dropout must lie in [0, 1), got {}", self.model.dropout)));
        }
        Ok(())
    }

    /// Adds `ablations` to `train.ablate` (deduplicated, sorted) and applies
    /// every listed switch: a loss weight set to zero, or the cross-modal
    /// attention bypassed.
    pub fn apply_ablations(&mut self, ablations: &[Ablation]) {
        let set: BTreeSet<Ablation> = self.train.ablate.iter().chain(ablations).copied().collect();
        for a in &set {
            match a {
                Ablation::Attr => self.loss.lambda_attr = 0.0,
                Ablation::Cont => self.loss.lambda_cont = 0.0,
                Ablation::Fp => self.loss.lambda_fp = 0.0,
                Ablation::Cen => self.loss.lambda_cen = 0.0,
                Ablation::CmaModule => self.model.bypass_cross_attention = true,
            }
        }
        self.train.ablate = set.into_iter().collect();
    }
}

fn merge(base: &mut toml::Table, user: toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in user {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(Error::Config(format!("unknown configuration key `{path}`"))),
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u, &path)?,
            (Some(toml::Value::Table(_)), _) => {
                return Err(Error::Config(format!("`{path}` must be a table")));
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_preset() {
        for p in [Preset::Desk, Preset::Paper] {
            assert_eq!(RunConfig::from_toml_str("", p).unwrap(), RunConfig::preset(p));
        }
    }

    #[test]
    fn defaults_match_published_hyperparameters() {
        let p = RunConfig::preset(Preset::Paper);
        assert_eq!(p.train, TrainConfig::default());
        assert_eq!(p.train.learning_rate, 1e-4);
        assert_eq!(p.train.epochs, 50);
        let c = RunConfig::preset(Preset::Desk);
        assert_eq!(c.train.learning_rate, 5e-4);
        assert_eq!(c.train.weight_decay, 1e-4);
        assert_eq!(c.train.epochs, TrainConfig::desk().epochs);
        assert_eq!(c.train.batch_size, 4);
        assert_eq!(c.train.clip_norm, 1.0);
        let l = &c.loss;
        assert_eq!(
            (l.lambda_attr, l.lambda_cont, l.lambda_fp, l.lambda_cen),
            (0.3, 0.1, 0.2, 0.05)
        );
        assert_eq!((l.alpha, l.gamma, l.tau, l.momentum), (0.75, 2.0, 0.07, 0.9));
        assert_eq!((p.data.frames, p.data.frame_size), (16, 224));
        assert_eq!((p.model.embed_dim, p.model.attention_heads), (512, 8));
        assert_eq!((c.data.frames, c.data.frame_size), (8, 64));
        assert_eq!((c.model.embed_dim, c.model.attention_heads), (64, 4));
    }

    #[test]
    fn overrides_merge_deeply() {
        let c = RunConfig::from_toml_str("[train]\nepochs = 3\n[data.augment]\nflip_prob = 0.0\n", Preset::Desk).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 4);
        assert_eq!(c.data.augment.flip_prob, 0.0);
        assert_eq!(c.data.augment.jitter_prob, 0.8);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml_str("[train]\nepochz = 3\n", Preset::Desk).unwrap_err();
        assert!(err.to_string().contains("train.epochz"), "{err}");
        let err = RunConfig::from_toml_str("[nope]\n", Preset::Desk).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
        let err = RunConfig::from_toml_str("[data.augment]\nblur = 1.0\n", Preset::Desk).unwrap_err();
        assert!(err.to_string().contains("data.augment.blur"), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::from_toml_str("[train]\nepochs = 0\n", Preset::Desk).is_err());
        assert!(RunConfig::from_toml_str("[train]\nablate = [\"attn\"]\n", Preset::Desk).is_err());
        assert!(RunConfig::from_toml_str("[model]\npretrained_init = true\n", Preset::Desk).is_err());
        assert!(RunConfig::from_toml_str("train = 3\n", Preset::Desk).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::from_toml_str("[train]\nablate = [\"fp\"]\nseed = 9\n", Preset::Desk).unwrap();
        c.apply_ablations(&[Ablation::Attr, Ablation::Fp]);
        let text = c.to_toml_string().unwrap();
        for p in [Preset::Desk, Preset::Paper] {
            assert_eq!(RunConfig::from_toml_str(&text, p).unwrap(), c);
        }
    }

    #[test]
    fn ablations_apply_switches() {
        let mut c = RunConfig::preset(Preset::Desk);
        c.apply_ablations(&[Ablation::Attr]);
        assert_eq!(c.loss.lambda_attr, 0.0);
        assert_eq!(c.loss.lambda_cont, 0.1);
        assert_eq!(c.train.ablate, vec![Ablation::Attr]);
        c.apply_ablations(&[Ablation::CmaModule, Ablation::Attr]);
        assert!(c.model.bypass_cross_attention);
        assert_eq!(c.train.ablate, vec![Ablation::Attr, Ablation::CmaModule]);
        let mut none = RunConfig::preset(Preset::Desk);
        none.apply_ablations(&[]);
        assert_eq!(none, RunConfig::preset(Preset::Desk));
        assert!("cma_module".parse::<Ablation>().is_ok());
        assert!("bogus".parse::<Ablation>().is_err());
    }
}
