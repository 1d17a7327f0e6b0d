use avattrib::datapipe::mel;
use avattrib::encoders::{adapt_first_layer, FrameFeatureSequence};
use avattrib::model::{Batch, Mode, Model, ModelConfig};
use avattrib::nn::{Backbone, BackbonePreset, Conv2d, ParamStore};
use candle_core::{Device, Tensor, D};
use rand::Rng;
use rand_distr::StandardNormal;

fn randn(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = avattrib::rng::stream(seed, "test-input", &[]);
    let n: usize = shape.iter().product();
    let v: Vec<f32> = (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

fn batch(b: usize, t: usize, s: usize, seed: u64) -> Batch {
    Batch {
        frames: randn(&[b, t, 3, s, s], seed),
        mel: randn(&[b, 1, mel::N_MELS, mel::N_FRAMES], seed + 1),
        y: vec![0; b],
        g: vec![0; b],
        source_ids: (0..b).map(|i| i.to_string()).collect(),
    }
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar().unwrap()
}

/// Unit-gain layer norm over the last axis, computed independently.
fn layer_norm(x: &Tensor, eps: f64) -> Tensor {
    let mean = x.mean_keepdim(D::Minus1).unwrap();
    let c = x.broadcast_sub(&mean).unwrap();
    let var = c.sqr().unwrap().mean_keepdim(D::Minus1).unwrap();
    c.broadcast_div(&(var + eps).unwrap().sqrt().unwrap()).unwrap()
}

fn zero(model: &Model, prefix: &str) {
    for (name, var) in model.store.vars() {
        if name.starts_with(prefix) {
            model.store.set_values(name, &vec![0.0; var.elem_count()]).unwrap();
        }
    }
}

#[test]
fn desk_shapes_and_normalization() {
    let cfg = ModelConfig::desk();
    let model = Model::new(&cfg, 4, 1).unwrap();
    let out = model.forward(&batch(3, 4, 32, 7), Mode::Eval).unwrap();
    let e = &out.embeddings;
    assert_eq!(e.z_f.dims(), &[3, 2 * cfg.embed_dim]);
    assert_eq!(e.p_v.dims(), &[3, cfg.proj_dim]);
    assert_eq!(out.heads.attr_probs.dims(), &[3, cfg.num_classes()]);
    for p in [&e.p_v, &e.p_a] {
        let norms: Vec<f32> = p.sqr().unwrap().sum(1).unwrap().sqrt().unwrap().to_vec1().unwrap();
        assert!(norms.iter().all(|n| (n - 1.0).abs() < 1e-5), "{norms:?}");
    }
    let sums: Vec<f32> = out.heads.attr_probs.sum(1).unwrap().to_vec1().unwrap();
    assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-6), "{sums:?}");
    let probs: Vec<f32> = out.heads.detect_prob.to_vec1().unwrap();
    assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn paper_scale_widths() {
    let cfg = ModelConfig::paper();
    let model = Model::new(&cfg, 16, 0).unwrap();
    let out = model.forward(&batch(1, 16, 32, 3), Mode::Eval).unwrap();
    assert_eq!(out.embeddings.z_f.dims(), &[1, 1024]);
    assert_eq!(model.visual.backbone.feature_dim(), 2048);
    let frames = randn(&[2, 3, 32, 32], 5);
    assert_eq!(model.visual.backbone.forward(&frames).unwrap().dims(), &[2, 2048]);
    assert_eq!(model.audio.backbone.feature_dim(), 512);
}

#[test]
fn parameter_counts_match_reference_backbones() {
    // torchvision resnet18 / resnet50 without the classifier; group norm has
    // the same affine parameter count as batch norm.
    let mut store = ParamStore::new(0);
    Backbone::new(&mut store, "r50", BackbonePreset::Resnet50).unwrap();
    assert_eq!(store.num_params(), 25_557_032 - (2048 * 1000 + 1000));
    let model = Model::new(&ModelConfig::paper(), 16, 0).unwrap();
    let rgb18 = 11_689_512 - (512 * 1000 + 1000);
    assert_eq!(model.store.num_params_under("audio.backbone"), rgb18 - 2 * 64 * 7 * 7);
    assert_eq!(
        model.store.num_params_under("audio."),
        rgb18 - 2 * 64 * 7 * 7 + 512 * 512 + 512
    );
}

#[test]
fn adapted_stem_averages_rgb_response() {
    let f64t = |t: Tensor| t.to_dtype(candle_core::DType::F64).unwrap();
    let w = f64t(randn(&[8, 3, 3, 3], 11));
    let x = f64t(randn(&[2, 1, 9, 9], 12));
    let rgb = Conv2d::from_weight(w.clone(), 1, 1);
    let single = Conv2d::from_weight(adapt_first_layer(&w).unwrap(), 1, 1);
    let x3 = Tensor::cat(&[&x, &x, &x], 1).unwrap();
    let expect = (rgb.forward(&x3).unwrap() / 3.0).unwrap();
    let diff: f64 = (single.forward(&x).unwrap() - expect)
        .unwrap()
        .abs()
        .unwrap()
        .flatten_all()
        .unwrap()
        .max(0)
        .unwrap()
        .to_scalar()
        .unwrap();
    assert!(diff < 1e-6, "{diff}");
    assert!(adapt_first_layer(&randn(&[8, 1, 3, 3], 1)).is_err());
}

#[test]
fn audio_stem_is_single_channel() {
    let model = Model::new(&ModelConfig::desk(), 4, 0).unwrap();
    assert_eq!(model.audio.backbone.stem.weight.dims()[1], 1);
    assert_eq!(model.visual.backbone.stem.weight.dims()[1], 3);
}

#[test]
fn pooled_visual_embedding_ignores_frame_order() {
    let model = Model::new(&ModelConfig::desk(), 5, 2).unwrap();
    let frames = randn(&[2, 5, 3, 32, 32], 9);
    let order = Tensor::new(&[3u32, 0, 4, 1, 2], &Device::Cpu).unwrap();
    let shuffled = frames.index_select(&order, 1).unwrap();
    let a = model.visual.forward(&frames).unwrap();
    let b = model.visual.forward(&shuffled).unwrap();
    assert!(max_abs_diff(&a, &b) < 1e-5);
}

#[test]
fn zero_attention_leaves_normalized_residual() {
    let model = Model::new(&ModelConfig::desk(), 4, 3).unwrap();
    zero(&model, "visual.temporal.out.");
    zero(&model, "cross.v_from_a.out.");
    zero(&model, "cross.a_from_v.out.");
    let eps = model.config.layer_norm_eps;
    let h = FrameFeatureSequence(randn(&[2, 4, 64], 4));
    let attended = model.visual.temporal_attend(&h).unwrap();
    assert!(max_abs_diff(&attended, &layer_norm(&h.0, eps)) < 1e-5);
    let (z_v, z_a) = (randn(&[3, 64], 5), randn(&[3, 64], 6));
    let (zt_v, zt_a) = model.cross.forward(&z_v, &z_a).unwrap();
    assert!(max_abs_diff(&zt_v, &layer_norm(&z_v, eps)) < 1e-5);
    assert!(max_abs_diff(&zt_a, &layer_norm(&z_a, eps)) < 1e-5);
}

#[test]
fn single_token_attention_is_value_projection() {
    let model = Model::new(&ModelConfig::desk(), 4, 4).unwrap();
    let mha = &model.cross.visual_from_audio;
    let q = randn(&[3, 1, 64], 7);
    let c = randn(&[3, 1, 64], 8);
    let expect = mha.out.forward(&mha.v.forward(&c).unwrap()).unwrap();
    assert!(max_abs_diff(&mha.forward(&q, &c).unwrap(), &expect) < 1e-5);
}

#[test]
fn bypass_feeds_encoder_outputs_to_fusion() {
    let cfg = ModelConfig {
        bypass_cross_attention: true,
        ..ModelConfig::desk()
    };
    let model = Model::new(&cfg, 4, 5).unwrap();
    let e = model.forward(&batch(2, 4, 32, 1), Mode::Eval).unwrap().embeddings;
    assert_eq!(max_abs_diff(&e.zt_v, &e.z_v), 0.0);
    assert_eq!(max_abs_diff(&e.zt_a, &e.z_a), 0.0);
    assert_eq!(max_abs_diff(&e.z_f.narrow(1, 0, 64).unwrap(), &e.z_v), 0.0);
    assert_eq!(max_abs_diff(&e.z_f.narrow(1, 64, 64).unwrap(), &e.z_a), 0.0);
}

#[test]
fn eval_forward_is_deterministic_and_train_dropout_is_seeded() {
    let model = Model::new(&ModelConfig::desk(), 4, 6).unwrap();
    let b = batch(2, 4, 32, 2);
    let a = model.forward(&b, Mode::Eval).unwrap().heads.detect_logit;
    let c = model.forward(&b, Mode::Eval).unwrap().heads.detect_logit;
    assert_eq!(max_abs_diff(&a, &c), 0.0);
    let mut r1 = avattrib::rng::stream(0, "dropout", &[0]);
    let mut r2 = avattrib::rng::stream(0, "dropout", &[0]);
    let t1 = model.forward(&b, Mode::Train(&mut r1)).unwrap().heads.attr_logits;
    let t2 = model.forward(&b, Mode::Train(&mut r2)).unwrap().heads.attr_logits;
    assert_eq!(max_abs_diff(&t1, &t2), 0.0);
}

#[test]
fn wrong_input_shapes_are_rejected() {
    let model = Model::new(&ModelConfig::desk(), 4, 0).unwrap();
    assert!(model.visual.forward(&randn(&[1, 3, 3, 16, 16], 0)).is_err());
    assert!(model.audio.forward(&randn(&[1, 1, 64, 128], 0)).is_err());
}
