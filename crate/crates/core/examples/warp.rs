//! Warps a synthetic thermal depth map into the RGB view and compares it with
//! the RGB ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmodal::camera::{warp_coords_thr_to_rgb, SplatPlan};
use xmodal::scenes::{random_spec, Scenario, SceneRanges};

fn main() -> xmodal::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, s) = random_spec(&mut rng, &SceneRanges::default(), Scenario::Day, 3)?;
    let t = s.rig.e_thr_to_rgb.translation();
    println!("baseline t = [{:.3}, {:.3}, {:.3}] m", t[0], t[1], t[2]);

    // A 32×32 map splatted into 64×64 leaves most pixels empty; training
    // upsamples the thermal depth by `pipeline::splat_factor` first.
    let coords = warp_coords_thr_to_rgb(&s.d_gt_thr, &s.rig)?;
    let plan = SplatPlan::build(&coords, s.rig.k_rgb.extent())?;
    let warped = plan.depth_map();
    let (h, w) = warped.extent();
    println!(
        "{} of {} rgb pixels receive thermal depth",
        warped.valid_count(),
        h * w
    );

    let mut errs: Vec<f64> = (0..h * w)
        .filter(|&i| warped.valid()[i])
        .map(|i| ((warped.values()[i] - s.d_gt_rgb.values()[i]) / s.d_gt_rgb.values()[i]).abs())
        .collect();
    errs.sort_by(f64::total_cmp);
    println!(
        "relative disagreement with rgb gt: median {:.4}, 90th percentile {:.4}",
        errs[errs.len() / 2],
        errs[errs.len() * 9 / 10]
    );
    Ok(())
}
