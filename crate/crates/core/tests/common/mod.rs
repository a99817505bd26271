#![allow(dead_code)]

pub mod grad_cases;
pub mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::test_runner::{Config, RngSeed};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use xmodal::tensor::Tensor;

/// Fixed-seed proptest configuration without regression files.
pub fn pt_config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5EED),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Values bounded away from zero in magnitude, with random sign.
pub fn rand_signed(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let v = rng.random_range(lo..hi);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// SHA-256 of every file under `root`, keyed by relative path.
pub fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                let hex = Sha256::digest(fs::read(&p).unwrap())
                    .iter()
                    .map(|b| format!("{b:02x}"))
                    .collect();
                out.insert(rel, hex);
            }
        }
    }
    out
}

/// Random 8×8 RGB / 4×4 thermal samples for whole-pipeline gradient checks.
pub mod toy {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use xmodal::camera::{CameraRig, DepthMap, ExtrinsicsSE3, Intrinsics};
    use std::collections::BTreeMap;
    use xmodal::pipeline::{forward, sample_losses, BoundModel, Checkpoint, Config, Inputs};
    use xmodal::tensor::{relative_error, Tape, Tensor, Var};

    pub struct Toy {
        pub i_rgb: Tensor,
        pub i_thr: Tensor,
        pub gt: DepthMap,
        pub rig: CameraRig,
    }

    pub fn toy(seed: u64) -> Toy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k_rgb = Intrinsics::new(8.0, 8.0, 3.5, 3.5, 8, 8).unwrap();
        let k_thr = Intrinsics::new(3.5, 3.5, 1.5, 1.5, 4, 4).unwrap();
        let e = ExtrinsicsSE3::from_translation([0.05, 0.0, 0.0]);
        let gt = DepthMap::from_values(8, 8, (0..64).map(|_| rng.random_range(3.0..15.0)).collect())
            .unwrap();
        Toy {
            i_rgb: super::rand_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0),
            i_thr: super::rand_tensor(&mut rng, &[1, 4, 4], 0.0, 1.0),
            gt,
            rig: CameraRig::new(k_rgb, k_thr, e).unwrap(),
        }
    }

    /// Summed total loss over the batch and, with `grads`, the gradient of
    /// every parameter keyed like `ModelParams::flatten`.
    pub fn batch_loss(
        ck: &Checkpoint,
        cfg: &Config,
        batch: &[Toy],
        grads: bool,
    ) -> (f64, Vec<(String, Tensor)>) {
        let model = ck.model().unwrap();
        let tape = Tape::new();
        let bound = BoundModel::bind(&ck.params, &tape, grads);
        let mut total: Option<Var<'_>> = None;
        for s in batch {
            let x = Inputs { i_rgb: &s.i_rgb, i_thr: &s.i_thr, rig: &s.rig };
            let out = forward(&model, &bound, &x, &cfg.ablation).unwrap();
            let l = sample_losses(&out, &s.gt, &cfg.ablation, &cfg.weights).unwrap().total;
            total = Some(match total {
                Some(t) => t.add(&l).unwrap(),
                None => l,
            });
        }
        let total = total.unwrap();
        let value = total.item().unwrap();
        if !grads {
            return (value, Vec::new());
        }
        tape.backward(total).unwrap();
        (value, bound.grads().into_iter().collect())
    }

    /// Central-difference step for whole-pipeline losses. The batch loss is
    /// O(10) while single gradients go down to 1e-7, so the step used for the
    /// single-op cases leaves only a few significant digits; much larger steps
    /// start straddling leaky-ReLU kinks.
    pub const PIPELINE_EPS: f64 = 1e-5;

    /// Worst relative error between autodiff and central differences of the
    /// batch loss, over every coordinate of the networks in `nets` (indices
    /// into `ModelParams::networks`), or over `sample` random coordinates per
    /// network when given. Returns the error and the worst coordinate.
    pub fn check_networks(
        ck: &mut Checkpoint,
        cfg: &Config,
        batch: &[Toy],
        nets: &[usize],
        sample: Option<(usize, u64)>,
    ) -> (f64, String) {
        let (_, grads) = batch_loss(ck, cfg, batch, true);
        let grads: BTreeMap<String, Tensor> = grads.into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(sample.map_or(0, |s| s.1));
        let mut worst = (0.0, String::new());
        for &net in nets {
            let (prefix, p) = ck.params.networks()[net];
            let mut coords: Vec<(String, usize)> = p
                .iter()
                .flat_map(|(n, t)| (0..t.numel()).map(move |i| (n.to_string(), i)))
                .collect();
            if let Some((k, _)) = sample {
                coords = (0..k).map(|_| coords[rng.random_range(0..coords.len())].clone()).collect();
            }
            for (name, i) in coords {
                let base = ck.params.networks()[net].1.get(&name).unwrap().clone();
                let mut eval = |delta: f64| {
                    let mut data = base.data().to_vec();
                    data[i] += delta;
                    let t = Tensor::new(base.shape().to_vec(), data).unwrap();
                    ck.params.networks_mut()[net].1.set(&name, t).unwrap();
                    batch_loss(ck, cfg, batch, false).0
                };
                let eps = PIPELINE_EPS;
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                ck.params.networks_mut()[net].1.set(&name, base).unwrap();
                let err = relative_error(grads[&format!("{prefix}.{name}")].data()[i], numeric);
                if err > worst.0 {
                    worst = (err, format!("{prefix}.{name}[{i}]"));
                }
            }
        }
        worst
    }
}
