use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Scenario, SceneSample};
use crate::tensor::Tensor;

/// Offsets the seed so degradation noise is independent of the layout
/// stream drawn from the same seed.
const NOISE_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

/// What one scenario does to each modality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Degradation {
    pub rgb_gain: f64,
    pub rgb_blur: usize,
    pub rgb_noise: f64,
    pub thr_blur: usize,
    pub thr_noise: f64,
}

impl Degradation {
    pub fn for_scenario(s: Scenario) -> Self {
        match s {
            Scenario::Day => Degradation {
                rgb_gain: 1.0,
                rgb_blur: 1,
                rgb_noise: 0.0,
                thr_blur: 3,
                thr_noise: 0.02,
            },
            Scenario::Night => Degradation {
                rgb_gain: 0.08,
                rgb_blur: 1,
                rgb_noise: 0.05,
                thr_blur: 1,
                thr_noise: 0.0,
            },
            Scenario::Rain => Degradation {
                rgb_gain: 1.0,
                rgb_blur: 5,
                rgb_noise: 0.03,
                thr_blur: 3,
                thr_noise: 0.02,
            },
        }
    }
}

/// Binomial row of odd length `k`, normalized.
fn binomial(k: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 1..k {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let s: f64 = row.iter().sum();
    row.into_iter().map(|v| v / s).collect()
}

/// Separable `k×k` binomial blur per channel with replicated borders;
/// `k = 1` is the identity.
pub fn blur(img: &Tensor, k: usize) -> Tensor {
    assert!(k % 2 == 1, "blur size must be odd");
    if k == 1 {
        return img.clone();
    }
    let s = img.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let taps = binomial(k);
    let r = (k / 2) as isize;
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let src = img.data();
    let mut tmp = vec![0.0; src.len()];
    let mut out = vec![0.0; src.len()];
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                tmp[base + y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(j, t)| t * src[base + y * w + clampi(x as isize + j as isize - r, w)])
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                out[base + y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(j, t)| t * tmp[base + clampi(y as isize + j as isize - r, h) * w + x])
                    .sum();
            }
        }
    }
    Tensor::new(s.to_vec(), out).expect("same shape")
}

fn apply(img: &Tensor, gain: f64, k: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = blur(&img.map(|v| v * gain), k);
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        let noisy = t.data().iter().map(|&v| v + normal.sample(rng)).collect();
        t = Tensor::new(t.shape().to_vec(), noisy).expect("same shape");
    }
    t.map(|v| v.clamp(0.0, 1.0))
}

/// Applies the scenario's degradation with noise drawn from the sample
/// seed. Ground truth and rig are carried over untouched.
pub fn degrade(sample: &SceneSample) -> SceneSample {
    let d = Degradation::for_scenario(sample.scenario);
    let mut rng = ChaCha8Rng::seed_from_u64(sample.seed ^ NOISE_STREAM);
    let i_rgb = apply(&sample.i_rgb, d.rgb_gain, d.rgb_blur, d.rgb_noise, &mut rng);
    let i_thr = apply(&sample.i_thr, 1.0, d.thr_blur, d.thr_noise, &mut rng);
    SceneSample {
        i_rgb,
        i_thr,
        ..sample.clone()
    }
}
