//! Scores a deliberately biased depth prediction with the training losses
//! and the evaluation metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmodal::camera::DepthMap;
use xmodal::losses::{confidence_targets, error_maps, silog_loss};
use xmodal::metrics::{evaluate_depth, OUTDOOR_CAPS};
use xmodal::scenes::{random_spec, Scenario, SceneRanges};
use xmodal::tensor::Tape;

fn main() -> xmodal::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (_, s) = random_spec(&mut rng, &SceneRanges::default(), Scenario::Night, 5)?;
    let gt = &s.d_gt_rgb;
    let (h, w) = gt.extent();

    // One prediction 20% too far everywhere, one off by +1 m on the left half.
    let scaled = DepthMap::from_values(h, w, gt.values().iter().map(|d| 1.2 * d).collect())?;
    let shifted = DepthMap::from_values(
        h,
        w,
        gt.values()
            .iter()
            .enumerate()
            .map(|(i, d)| if i % w < w / 2 { d + 1.0 } else { *d })
            .collect(),
    )?;

    for (name, pred) in [("scaled", &scaled), ("shifted", &shifted)] {
        let tape = Tape::new();
        let silog = silog_loss(&tape.constant(pred.to_tensor()), gt, 0.5)?.item().unwrap();
        let m = evaluate_depth(pred, gt, OUTDOOR_CAPS.0, OUTDOOR_CAPS.1)?;
        println!(
            "{name:8} silog {silog:.4}  abs_rel {:.4}  rmse {:.3}  delta1 {:.3}",
            m.abs_rel, m.rmse, m.delta1
        );
    }

    let t = confidence_targets(&error_maps(gt, &scaled, &shifted)?)?;
    let left = t.t_rgb[h / 2 * w];
    let right = t.t_rgb[h / 2 * w + w - 1];
    println!("C_RGB target treating 'scaled' as rgb: left {left:.3}, right {right:.3}");
    Ok(())
}
