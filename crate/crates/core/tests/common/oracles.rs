//! Independent reference implementations shared by the tests and the
//! acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmodal::camera::{warp_coords_thr_to_rgb, DepthMap, SplatPlan};
use xmodal::losses::{confidence_loss, ConfidenceTargets};
use xmodal::metrics::MetricsRecord;
use xmodal::scenes::{random_spec, Scenario, SceneRanges};
use xmodal::tensor::{Tape, Tensor};

pub fn random_depth(rng: &mut ChaCha8Rng, h: usize, w: usize, p_invalid: f64) -> DepthMap {
    let values = (0..h * w).map(|_| rng.random_range(0.3..90.0)).collect();
    let valid = (0..h * w).map(|_| !rng.random_bool(p_invalid)).collect();
    DepthMap::new(h, w, values, valid).unwrap()
}

/// Straight scalar re-derivation of every metric, one pass per metric.
pub fn brute_force(pred: &DepthMap, gt: &DepthMap, lo: f64, hi: f64) -> MetricsRecord {
    let mut pairs = Vec::new();
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            let i = r * gt.width() + c;
            let g = gt.values()[i];
            if gt.valid()[i] && lo <= g && g <= hi {
                let p = if pred.valid()[i] {
                    pred.values()[i].max(lo).min(hi)
                } else {
                    lo
                };
                pairs.push((p, g));
            }
        }
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| {
        let mut acc = 0.0;
        for &(p, g) in &pairs {
            acc += f(p, g);
        }
        acc / n
    };
    let frac = |t: f64| mean(&|p, g| if f64::max(p / g, g / p) < t { 1.0 } else { 0.0 });
    MetricsRecord {
        abs_rel: mean(&|p, g| (p - g).abs() / g),
        sq_rel: mean(&|p, g| (p - g).powi(2) / g),
        rmse: mean(&|p, g| (p - g).powi(2)).sqrt(),
        rmse_log: mean(&|p, g| (p.ln() - g.ln()).powi(2)).sqrt(),
        delta1: frac(1.25),
        delta2: frac(1.5625),
        delta3: frac(1.953125),
        n_pixels: pairs.len(),
    }
}

pub fn metric_fields(m: &MetricsRecord) -> [f64; 7] {
    [m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3]
}

/// Subgradient descent with a geometric step on the confidence loss alone.
pub fn descend_confidence(targets: &ConfidenceTargets, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let n = targets.t_rgb.len();
    let shape = vec![1, targets.height, targets.width];
    let count = targets.valid.iter().filter(|&&v| v).count() as f64;
    let (mut c_rgb, mut c_thr) = (vec![0.5; n], vec![0.5; n]);
    let mut step = 0.2;
    for _ in 0..steps {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(shape.clone(), c_rgb.clone()).unwrap(), true);
        let b = tape.leaf(Tensor::new(shape.clone(), c_thr.clone()).unwrap(), true);
        let loss = confidence_loss(&a, &b, targets).unwrap();
        tape.backward(loss).unwrap();
        let (ga, gb) = (a.grad().unwrap(), b.grad().unwrap());
        for i in 0..n {
            c_rgb[i] -= step * count * ga.data()[i];
            c_thr[i] -= step * count * gb.data()[i];
        }
        step *= 0.97;
    }
    (c_rgb, c_thr)
}

/// Fraction of non-occluded RGB pixels whose splatted thermal ground truth
/// agrees with the RGB ground truth within `tol` relative error.
pub fn cross_view_agreement(seed: u64, tol: f64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (spec, sample) = random_spec(&mut rng, &SceneRanges::default(), Scenario::Day, seed).unwrap();
    let (rgb_ids, thr_ids) = (spec.rgb_ids(), spec.thr_ids());
    let coords = warp_coords_thr_to_rgb(&sample.d_gt_thr, &sample.rig).unwrap();
    let plan = SplatPlan::build(&coords, sample.rig.k_rgb.extent()).unwrap();
    let splat = plan.depth_map();
    let (mut ok, mut total) = (0, 0);
    for (p, w) in plan.winners().iter().enumerate() {
        let Some(src) = *w else { continue };
        if rgb_ids[p].is_none() || rgb_ids[p] != thr_ids[src] {
            continue;
        }
        total += 1;
        let g = sample.d_gt_rgb.values()[p];
        if ((splat.values()[p] - g) / g).abs() < tol {
            ok += 1;
        }
    }
    (ok, total)
}
