//! Loss closed forms and an independent metric oracle.

mod common;

use common::oracles::{brute_force, descend_confidence, metric_fields, random_depth};
use common::pt_config;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmodal::camera::DepthMap;
use xmodal::losses::{confidence_targets, error_maps, silog_loss};
use xmodal::metrics::{evaluate_depth, MetricsRecord, OUTDOOR_CAPS};
use xmodal::tensor::{Tape, Tensor};

fn assert_records_close(a: &MetricsRecord, b: &MetricsRecord, tol: f64) {
    for (x, y) in metric_fields(a).iter().zip(metric_fields(b)) {
        assert!((x - y).abs() <= tol * y.abs().max(1.0), "{a:?} vs {b:?}");
    }
    assert_eq!(a.n_pixels, b.n_pixels);
}

#[test]
fn metrics_match_brute_force_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let gt = random_depth(&mut rng, 8, 8, 0.2);
        let pred = random_depth(&mut rng, 8, 8, 0.1);
        let (lo, hi) = OUTDOOR_CAPS;
        let got = evaluate_depth(&pred, &gt, lo, hi).unwrap();
        assert_records_close(&got, &brute_force(&pred, &gt, lo, hi), 1e-12);
    }
}

#[test]
fn uniform_ratio_13() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let gt = DepthMap::from_values(8, 8, (0..64).map(|_| rng.random_range(1.0..50.0)).collect())
        .unwrap();
    let pred = DepthMap::from_values(8, 8, gt.values().iter().map(|g| 1.3 * g).collect()).unwrap();
    let m = evaluate_depth(&pred, &gt, 0.5, 80.0).unwrap();
    assert!((m.abs_rel - 0.3).abs() < 1e-12);
    assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 1.0, 1.0));
}

#[test]
fn empty_window_is_an_error() {
    let gt = DepthMap::from_values(2, 2, vec![100.0; 4]).unwrap();
    assert!(evaluate_depth(&gt, &gt, 0.5, 80.0).is_err());
    let small = DepthMap::from_values(1, 2, vec![1.0; 2]).unwrap();
    assert!(evaluate_depth(&small, &gt, 0.5, 80.0).is_err());
}

proptest! {
    #![proptest_config(pt_config(64))]

    #[test]
    fn metric_properties(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_depth(&mut rng, 6, 7, 0.1);
        prop_assume!(gt.valid().iter().zip(gt.values()).any(|(&v, &g)| v && (0.5..=80.0).contains(&g)));
        let pred = random_depth(&mut rng, 6, 7, 0.0);
        let m = evaluate_depth(&pred, &gt, 0.5, 80.0).unwrap();
        prop_assert!(m.abs_rel >= 0.0 && m.sq_rel >= 0.0 && m.rmse >= 0.0 && m.rmse_log >= 0.0);
        prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3 && m.delta3 <= 1.0);
        let perfect = evaluate_depth(&gt, &gt, 0.5, 80.0).unwrap();
        prop_assert_eq!(
            (perfect.abs_rel, perfect.rmse, perfect.rmse_log, perfect.delta1),
            (0.0, 0.0, 0.0, 1.0)
        );
        // Scaling depths and caps together leaves relative metrics alone.
        let s = rng.random_range(0.5..2.0);
        let scale = |d: &DepthMap| {
            DepthMap::new(d.height(), d.width(), d.values().iter().map(|v| v * s).collect(), d.valid().to_vec()).unwrap()
        };
        let ms = evaluate_depth(&scale(&pred), &scale(&gt), 0.5 * s, 80.0 * s).unwrap();
        prop_assert!((ms.abs_rel - m.abs_rel).abs() < 1e-9);
        prop_assert!((ms.rmse - s * m.rmse).abs() < 1e-9 * s.max(1.0) * m.rmse.max(1.0));
        prop_assert_eq!(ms.n_pixels, m.n_pixels);
    }

    #[test]
    fn silog_of_constant_log_offset(seed in any::<u64>(), c in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_depth(&mut rng, 5, 6, 0.2);
        prop_assume!(gt.valid_count() > 0);
        let pred: Vec<f64> = gt.values().iter().map(|g| g * (-c).exp()).collect();
        let tape = Tape::new();
        let d = tape.constant(Tensor::new(vec![1, 5, 6], pred).unwrap());
        let v = silog_loss(&d, &gt, 0.5).unwrap().item().unwrap();
        prop_assert!((v - c.abs() * 0.5f64.sqrt()).abs() < 1e-9, "{} vs {}", v, c);
    }

    #[test]
    fn confidence_targets_closed_form(e in 0.0f64..30.0, gap in -30.0f64..30.0) {
        let gt = DepthMap::from_values(1, 2, vec![40.0, 40.0]).unwrap();
        let rgb = DepthMap::from_values(1, 2, vec![40.0 - e, 40.0 + e]).unwrap();
        let thr = DepthMap::from_values(1, 2, vec![40.0 - e, 40.0 + e + gap.abs()]).unwrap();
        let t = confidence_targets(&error_maps(&gt, &rgb, &thr).unwrap()).unwrap();
        prop_assert!((t.t_rgb[0] - 0.5).abs() < 1e-12);
        let want = 1.0 / (1.0 + (-gap.abs()).exp());
        prop_assert!((t.t_rgb[1] - want).abs() < 1e-12);
        prop_assert!((t.t_rgb[1] + t.t_thr[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn confidence_target_three_to_one() {
    let gt = DepthMap::from_values(1, 1, vec![10.0]).unwrap();
    let rgb = gt.clone();
    let thr = DepthMap::from_values(1, 1, vec![10.0 + 3f64.ln()]).unwrap();
    let t = confidence_targets(&error_maps(&gt, &rgb, &thr).unwrap()).unwrap();
    assert!((t.t_rgb[0] - 0.75).abs() < 1e-12);
    assert!((t.t_thr[0] - 0.25).abs() < 1e-12);
}

#[test]
fn confidence_loss_descent_reaches_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt = random_depth(&mut rng, 4, 4, 0.0);
    let jitter = |rng: &mut ChaCha8Rng, d: &DepthMap| {
        let v = d.values().iter().map(|g| g + rng.random_range(-2.0..2.0)).collect();
        DepthMap::from_values(4, 4, v).unwrap()
    };
    let rgb = jitter(&mut rng, &gt);
    let thr = jitter(&mut rng, &gt);
    let t = confidence_targets(&error_maps(&gt, &rgb, &thr).unwrap()).unwrap();
    let (c_rgb, c_thr) = descend_confidence(&t, 400);
    for i in 0..16 {
        assert!((c_rgb[i] - t.t_rgb[i]).abs() < 1e-3, "pixel {i}: {} vs {}", c_rgb[i], t.t_rgb[i]);
        assert!((c_thr[i] - t.t_thr[i]).abs() < 1e-3);
    }
}
