//! Runs the untrained model on one scene and inspects every stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmodal::pipeline::{forward, BoundModel, Checkpoint, Config, Inputs};
use xmodal::scenes::{degrade, random_spec, Scenario, SceneRanges};
use xmodal::tensor::Tape;

fn main() -> xmodal::Result<()> {
    let cfg = Config::default();
    let ck = Checkpoint::fresh(&cfg)?;
    for (name, p) in ck.params.networks() {
        println!("{name:10} {:6} parameters", p.param_count());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (_, clean) = random_spec(&mut rng, &SceneRanges::default(), Scenario::Rain, 2)?;
    let s = degrade(&clean);
    let model = ck.model()?;
    let tape = Tape::new();
    let bound = BoundModel::bind(&ck.params, &tape, false);
    let x = Inputs { i_rgb: &s.i_rgb, i_thr: &s.i_thr, rig: &s.rig };
    let out = forward(&model, &bound, &x, &cfg.ablation)?;

    let range = |t: &xmodal::tensor::Tensor| {
        let d = t.data();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        format!("{:?} in [{lo:.3}, {hi:.3}]", t.shape())
    };
    println!("D_RGB        {}", range(&out.d_rgb.value()));
    println!("D_THR        {}", range(&out.d_thr.value()));
    println!("D_THR warped {}", range(&out.d_thr_warped.depth.value()));
    println!("C_RGB        {}", range(&out.conf.c_rgb.value()));
    println!("fused        {}", range(&out.fused.value()));
    Ok(())
}
