use std::fs;
use std::path::Path;

use avattrib::datapipe::{generate_synthetic, DatasetManifest, ManifestEntry, Split};
use avattrib::trainer::{self, checkpoint, read_log, LogRecord, TrainOptions};
use avattrib::{Ablation, Error, Preset, RunConfig};

fn tiny_config(epochs: usize) -> RunConfig {
    RunConfig::from_toml_str(
        &format!(
            "[synth]\ngenerators = 2\nn_per_class = 3\nframes = 2\nframe_size = 16\n\
             [data]\nframes = 2\nframe_size = 16\n\
             [train]\nepochs = {epochs}\nbatch_size = 4\nseed = 5\n"
        ),
        Preset::Desk,
    )
    .unwrap()
}

fn dataset(dir: &Path, cfg: &RunConfig) -> DatasetManifest {
    generate_synthetic(&cfg.synth, dir).unwrap()
}

#[test]
fn log_records_compose_and_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(2);
    let m = dataset(&tmp.path().join("data"), &cfg);
    let out = trainer::train(&m, &cfg, &tmp.path().join("run"), &TrainOptions::default()).unwrap();
    let log = read_log(&out.log_path).unwrap();
    let steps = log.iter().filter(|r| matches!(r, LogRecord::Step(_))).count();
    let epochs = log.len() - steps;
    // 9 train clips, batch 4 -> 3 steps per epoch
    assert_eq!((steps, epochs), (6, 2));
    assert_eq!(out.global_step, 6);
    let w = &cfg.loss;
    for r in &log {
        if let LogRecord::Step(s) = r {
            let l = s.losses;
            let composed = l.det + w.lambda_attr * l.attr + w.lambda_cont * l.cont + w.lambda_fp * l.fp + w.lambda_cen * l.cen;
            assert!((composed - l.total).abs() < 1e-12);
            assert!([l.det, l.attr, l.cont, l.fp, l.cen].iter().all(|v| v.is_finite()));
        }
    }
    let lrs: Vec<f64> = log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Epoch(e) => Some(e.lr),
            _ => None,
        })
        .collect();
    let lr = cfg.train.learning_rate;
    assert!((lrs[0] - lr).abs() < 1e-15 && (lrs[1] - lr / 2.0).abs() < 1e-12);
    for dir in ["final", "best", "last"] {
        assert!(tmp.path().join("run").join(dir).join("weights.bin").is_file(), "{dir}");
    }
    let echo = RunConfig::load(&tmp.path().join("run/config.toml"), Preset::Paper).unwrap();
    assert_eq!(echo.model.num_generators, 2);
    assert_eq!(echo.train, cfg.train);
}

#[test]
fn identical_seeds_give_identical_logs_and_resume_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(3);
    let m = dataset(&tmp.path().join("data"), &cfg);
    let a = trainer::train(&m, &cfg, &tmp.path().join("a"), &TrainOptions::default()).unwrap();
    let b = trainer::train(&m, &cfg, &tmp.path().join("b"), &TrainOptions::default()).unwrap();
    let log_a = fs::read(&a.log_path).unwrap();
    assert_eq!(log_a, fs::read(&b.log_path).unwrap());

    let c_dir = tmp.path().join("c");
    let stop = TrainOptions {
        stop_after_epochs: Some(1),
        ..Default::default()
    };
    let partial = trainer::train(&m, &cfg, &c_dir, &stop).unwrap();
    assert!(partial.final_checkpoint.is_none());
    let resume = TrainOptions {
        resume_from: Some(c_dir.join("last")),
        ..Default::default()
    };
    let c = trainer::train(&m, &cfg, &c_dir, &resume).unwrap();
    assert_eq!(log_a, fs::read(&c.log_path).unwrap());
    let wa = fs::read(a.final_checkpoint.unwrap().join("weights.bin")).unwrap();
    let wc = fs::read(c.final_checkpoint.unwrap().join("weights.bin")).unwrap();
    assert!(wa == wc, "resumed weights differ");
}

#[test]
fn parameters_without_gradient_decay_by_lr_times_wd() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(1);
    cfg.train.learning_rate = 0.05;
    cfg.train.weight_decay = 0.2;
    cfg.apply_ablations(&[Ablation::CmaModule]);
    let m = dataset(&tmp.path().join("data"), &cfg);
    let probe = "cross.v_from_a.q.weight";
    let fresh = avattrib::model::Model::new(
        &avattrib::model::ModelConfig {
            num_generators: 2,
            ..cfg.model.clone()
        },
        cfg.data.frames,
        cfg.train.seed,
    )
    .unwrap();
    let before = fresh.store.values(probe).unwrap();
    let out = trainer::train(&m, &cfg, &tmp.path().join("run"), &TrainOptions::default()).unwrap();
    let (model, _) = checkpoint::load_model(&out.final_checkpoint.unwrap()).unwrap();
    let after = model.store.values(probe).unwrap();
    let mut expect = before.clone();
    for _ in 0..out.global_step {
        for v in &mut expect {
            *v = (f64::from(*v) * (1.0 - 0.05 * 0.2)) as f32;
        }
    }
    assert_eq!(after, expect);
    assert_ne!(after, before);
}

#[test]
fn empty_train_split_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(1);
    let mut m = dataset(&tmp.path().join("data"), &cfg);
    m.entries.retain(|e: &ManifestEntry| e.split != Split::Train);
    let err = trainer::train(&m, &cfg, &tmp.path().join("run"), &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}

#[test]
fn ablation_sets_weight_and_is_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(1);
    let m = dataset(&tmp.path().join("data"), &cfg);
    let out = trainer::ablate(&m, &cfg, &[Ablation::Attr], &tmp.path().join("run")).unwrap();
    let echo = RunConfig::load(&out.out_dir.join("config.toml"), Preset::Desk).unwrap();
    assert_eq!(echo.loss.lambda_attr, 0.0);
    assert_eq!(echo.loss.lambda_fp, cfg.loss.lambda_fp);
    assert_eq!(echo.train.ablate, vec![Ablation::Attr]);
}

#[test]
fn evaluation_of_a_checkpoint_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(1);
    let m = dataset(&tmp.path().join("data"), &cfg);
    let out = trainer::train(&m, &cfg, &tmp.path().join("run"), &TrainOptions::default()).unwrap();
    let ck = out.final_checkpoint.unwrap();
    let a = avattrib::evalkit::evaluate(&ck, &m, Split::Test, 0.5).unwrap();
    let b = avattrib::evalkit::evaluate(&ck, &m, Split::Test, 0.5).unwrap();
    assert_eq!(a.report, b.report);
    let r = &a.report;
    assert_eq!(r.num_samples, 9);
    let total: u64 = r.detect_confusion.iter().flatten().sum();
    assert_eq!(total, 9);
    assert_eq!(r.balanced_accuracy, (r.real_accuracy + r.fake_accuracy) / 2.0);
    use avattrib::evalkit::{embeddings_tsv, EmbeddingKind};
    let ta = embeddings_tsv(&a.rows, EmbeddingKind::Zf);
    assert_eq!(ta, embeddings_tsv(&b.rows, EmbeddingKind::Zf));
    assert_eq!(ta.lines().count(), 10);
    assert_eq!(ta.lines().nth(1).unwrap().split('\t').count(), 3 + 128);
}
