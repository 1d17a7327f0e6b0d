use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use avattrib::datapipe::{generate_synthetic, DatasetManifest, Split};
use avattrib::evalkit::{self, plot, EmbeddingKind, MetricsReport, SimilarityStats};
use avattrib::trainer::{self, TrainOptions};
use avattrib::{Ablation, Preset, RunConfig};

/// Audio-visual deepfake detection with generator attribution.
#[derive(Parser, Debug)]
#[command(name = "avattrib", version)]
struct Cli {
    /// Scale preset the configuration file is layered over.
    #[arg(long, global = true, default_value = "desk", value_parser = parse_preset)]
    preset: Preset,

    /// TOML run configuration. Missing keys take preset defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Directory for generated datasets when `--out` is omitted.
    #[arg(long, global = true, env = "AVATTRIB_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic fingerprint dataset.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes checkpoints, the training log and a config echo.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Components to switch off: attr, cont, fp, cen, cma_module.
        #[arg(long, value_delimiter = ',', value_parser = parse_ablation)]
        ablate: Vec<Ablation>,
        /// Continue from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint; writes report.json, scores.tsv, similarity.json.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one representation of every clip in a split as TSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// z_v, z_a, z_f, p_v or p_a.
        #[arg(long, default_value = "z_f", value_parser = parse_kind)]
        which: EmbeddingKind,
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render evaluation artifacts.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// scores.tsv, similarity.json, or report.json files (`name=path`
        /// sets an ablation variant's label).
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
#[value(rename_all = "snake_case")]
enum PlotKind {
    ScoreHist,
    SimilarityBars,
    AblationTable,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: avattrib::Error| e.to_string())
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: avattrib::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: avattrib::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<EmbeddingKind, String> {
    s.parse().map_err(|e: avattrib::Error| e.to_string())
}

/// Failures that are the caller's fault exit with 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p, cli.preset),
        None => Ok(RunConfig::preset(cli.preset)),
    };
    cfg.map_err(|e| anyhow!(Usage(e.to_string())))
}

fn load_manifest(path: &Path) -> anyhow::Result<DatasetManifest> {
    DatasetManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn checkpoint_exists(dir: &Path) -> anyhow::Result<()> {
    if !dir.join("weights.bin").is_file() {
        bail!(Usage(format!("{} is not a checkpoint directory", dir.display())));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Synth { ref out } => {
            let out = match (out, &cli.cache_dir) {
                (Some(o), _) => o.clone(),
                (None, Some(c)) => c.join(format!("synth-{}", config.synth.seed)),
                (None, None) => bail!(Usage("synth needs --out or AVATTRIB_CACHE_DIR".into())),
            };
            let manifest = generate_synthetic(&config.synth, &out)?;
            println!(
                "wrote {} clips over {} classes to {}",
                manifest.entries.len(),
                manifest.num_generators() + 1,
                out.join("manifest.jsonl").display()
            );
        }
        Command::Train {
            ref manifest,
            ref out,
            ref ablate,
            ref resume,
        } => {
            let m = load_manifest(manifest)?;
            let mut config = config;
            config.apply_ablations(ablate);
            let opts = TrainOptions {
                resume_from: resume.clone(),
                ..Default::default()
            };
            let outcome = trainer::train(&m, &config, out, &opts)?;
            let best = outcome.epochs.iter().filter_map(|e| e.val_balanced_accuracy).fold(None, |b: Option<f64>, v| {
                Some(b.map_or(v, |b| b.max(v)))
            });
            println!(
                "trained {} steps; log {}; best val balanced accuracy {}",
                outcome.global_step,
                outcome.log_path.display(),
                best.map_or("n/a".into(), |b| format!("{b:.4}"))
            );
        }
        Command::Eval {
            ref checkpoint,
            ref manifest,
            threshold,
            split,
            ref out,
        } => {
            checkpoint_exists(checkpoint)?;
            let m = load_manifest(manifest)?;
            let threshold = threshold.unwrap_or(config.eval.threshold);
            if !(0.0..=1.0).contains(&threshold) {
                bail!(Usage(format!("--threshold must lie in [0, 1], got {threshold}")));
            }
            let split = split.unwrap_or(config.eval.split);
            let ev = evalkit::evaluate(checkpoint, &m, split, threshold)?;
            write(&out.join("report.json"), &json(&ev.report))?;
            write(&out.join("scores.tsv"), &evalkit::scores_tsv(&ev.rows))?;
            write(&out.join("similarity.json"), &json(&ev.similarity))?;
            let r = &ev.report;
            println!(
                "{split}: balanced accuracy {:.4}, AUC {}, attribution {:.4} over {} clips",
                r.balanced_accuracy,
                r.auc.map_or("n/a".into(), |a| format!("{a:.4}")),
                r.attribution_accuracy,
                r.num_samples
            );
        }
        Command::ExportEmbeddings {
            ref checkpoint,
            ref manifest,
            which,
            split,
            ref out,
        } => {
            checkpoint_exists(checkpoint)?;
            let m = load_manifest(manifest)?;
            let (model, run_cfg) = trainer::checkpoint::load_model(checkpoint)?;
            let split = split.unwrap_or(config.eval.split);
            let rows = evalkit::run_inference(&model, &m, split, &run_cfg.data, run_cfg.eval.batch_size)?;
            write(out, &evalkit::embeddings_tsv(&rows, which))?;
            println!("wrote {} {which} rows to {}", rows.len(), out.display());
        }
        Command::Plot { kind, ref inputs, ref out } => plot_cmd(kind, inputs, out)?,
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn plot_cmd(kind: PlotKind, inputs: &[String], out: &Path) -> anyhow::Result<()> {
    match kind {
        PlotKind::ScoreHist => {
            let mut real = Vec::new();
            let mut fake = Vec::new();
            for input in inputs {
                for (y, _, p) in evalkit::export::parse_scores_tsv(&read(Path::new(input))?)? {
                    if y == 0 { real.push(p) } else { fake.push(p) }
                }
            }
            write(out, &plot::score_hist_svg(&real, &fake, 20))?;
            let all: Vec<f64> = real.iter().chain(&fake).copied().collect();
            println!(
                "{} scores; {:.1}% within [0, 0.2] or [0.8, 1]",
                all.len(),
                100.0 * plot::mass_near_extremes(&all, 0.2, 0.8)
            );
        }
        PlotKind::SimilarityBars => {
            let [input] = inputs else {
                bail!(Usage("similarity_bars takes exactly one similarity.json".into()));
            };
            let stats: BTreeMap<u32, SimilarityStats> = serde_json::from_str(&read(Path::new(input))?)
                .with_context(|| format!("parsing {input}"))?;
            let names = BTreeMap::from([(0, "real".to_string())]);
            write(out, &plot::similarity_bars_svg(&stats, &names))?;
            println!("{} classes", stats.len());
        }
        PlotKind::AblationTable => {
            let mut reports = Vec::new();
            for input in inputs {
                let (name, path) = match input.split_once('=') {
                    Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                    None => {
                        let p = PathBuf::from(input);
                        let name = p
                            .parent()
                            .and_then(|d| d.file_name())
                            .map(|n| n.to_string_lossy().into_owned())
                            .unwrap_or_else(|| input.clone());
                        (name, p)
                    }
                };
                let r: MetricsReport =
                    serde_json::from_str(&read(&path)?).with_context(|| format!("parsing {}", path.display()))?;
                reports.push((name, r));
            }
            let table = evalkit::compare_ablations(&reports).map_err(|e| anyhow!(Usage(e.to_string())))?;
            let text = table.render();
            write(out, &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<avattrib::Error>() {
        Some(avattrib::Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
