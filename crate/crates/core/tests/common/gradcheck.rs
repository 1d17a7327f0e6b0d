//! Analytic gradients of every loss against central finite differences in
//! 64-bit floats.

use avattrib::losses::{
    attribution_ce, centroid_loss, cmffc_loss, focal_loss, info_nce, label_tensor, total_loss, CentroidTable,
    LossTerms, LossWeights,
};
use avattrib::nn::ops;
use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const INSTANCES: usize = 24;

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)` over
/// every coordinate of `x0`.
pub fn check(x0: &[f64], shape: &[usize], f: &dyn Fn(&Tensor) -> Tensor) -> f64 {
    let dev = Device::Cpu;
    let var = Var::from_vec(x0.to_vec(), shape, &dev).unwrap();
    let loss = f(var.as_tensor());
    let grads = loss.backward().unwrap();
    let analytic: Vec<f64> = match grads.get(var.as_tensor()) {
        Some(g) => g.flatten_all().unwrap().to_vec1().unwrap(),
        None => vec![0.0; x0.len()],
    };
    let eval = |x: &[f64]| ops::scalar(&f(&Tensor::from_slice(x, shape, &dev).unwrap())).unwrap();
    let mut worst = 0f64;
    let mut x = x0.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + STEP;
        let up = eval(&x);
        x[i] = orig - STEP;
        let down = eval(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}


/// Worst relative error per loss over [`INSTANCES`] random instances.
pub fn all_losses(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = avattrib::rng::stream(seed, "gradcheck", &[]);
    let mut worst = vec![
        ("focal", 0f64),
        ("attribution_ce", 0.0),
        ("info_nce", 0.0),
        ("cmffc", 0.0),
        ("centroid", 0.0),
        ("total", 0.0),
    ];
    for _ in 0..INSTANCES {
        let b = rng.random_range(3..7usize);
        let k = rng.random_range(2..5usize);
        let p = rng.random_range(2..5usize);
        let y: Vec<u8> = (0..b).map(|_| rng.random_range(0..2u8)).collect();
        let g: Vec<u32> = y.iter().map(|&y| if y == 1 { rng.random_range(1..k as u32) } else { 0 }).collect();
        // force one repeated generator so the fingerprint term is active
        let mut g_fp = g.clone();
        g_fp[0] = 1;
        g_fp[1] = 1;
        let tau = rng.random_range(0.1..1.0);
        let alpha = rng.random_range(0.2..0.9);
        let gamma = rng.random_range(0.0..3.0);

        let probs = uniform(&mut rng, b, 0.05, 0.95);
        let yt = label_tensor(&y, DType::F64, &Device::Cpu).unwrap();
        let e = check(&probs, &[b], &|x| focal_loss(x, &yt, alpha, gamma).unwrap());
        worst[0].1 = worst[0].1.max(e);

        let logits = uniform(&mut rng, b * k, -2.0, 2.0);
        let e = check(&logits, &[b, k], &|x| {
            attribution_ce(&ops::softmax_last(x).unwrap(), &g).unwrap()
        });
        worst[1].1 = worst[1].1.max(e);

        let xy = uniform(&mut rng, 2 * b * p, -1.0, 1.0);
        let e = check(&xy, &[2, b, p], &|z| {
            info_nce(&z.get(0).unwrap(), &z.get(1).unwrap(), tau).unwrap()
        });
        worst[2].1 = worst[2].1.max(e);
        let e = check(&xy, &[2, b, p], &|z| {
            let pv = ops::l2_normalize_rows(&z.get(0).unwrap(), 1e-12).unwrap();
            let pa = ops::l2_normalize_rows(&z.get(1).unwrap(), 1e-12).unwrap();
            cmffc_loss(&pv, &pa, &g_fp, tau).unwrap().loss
        });
        worst[3].1 = worst[3].1.max(e);

        let mut table = CentroidTable::zeros(k, p);
        table.values = uniform(&mut rng, k * p, -1.0, 1.0).into_iter().map(|v| v as f32).collect();
        let zf = uniform(&mut rng, b * p, -1.0, 1.0);
        let e = check(&zf, &[b, p], &|z| centroid_loss(z, &g, &table, false).unwrap());
        worst[4].1 = worst[4].1.max(e);

        let weights = LossWeights {
            alpha,
            gamma,
            tau,
            ..LossWeights::default()
        };
        let e = check(&xy, &[2, b, p], &|z| {
            let pv = ops::l2_normalize_rows(&z.get(0).unwrap(), 1e-12).unwrap();
            let pa = ops::l2_normalize_rows(&z.get(1).unwrap(), 1e-12).unwrap();
            let prob = ops::sigmoid(&z.get(0).unwrap().sum(1).unwrap()).unwrap();
            let attr = ops::softmax_last(&z.get(1).unwrap()).unwrap();
            let gp: Vec<u32> = g_fp.iter().map(|&c| c.min(p as u32 - 1)).collect();
            let terms = LossTerms {
                det: focal_loss(&prob, &yt, alpha, gamma).unwrap(),
                attr: attribution_ce(&attr, &gp).unwrap(),
                cont: info_nce(&pv, &pa, tau).unwrap(),
                fp: cmffc_loss(&pv, &pa, &gp, tau).unwrap().loss,
                cen: centroid_loss(&z.get(0).unwrap(), &vec![0; b], &CentroidTable::zeros(1, p), false).unwrap(),
            };
            total_loss(&terms, &weights).unwrap().0
        });
        worst[5].1 = worst[5].1.max(e);
    }
    worst
}
