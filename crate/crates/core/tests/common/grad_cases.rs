//! One random instance per call of every differentiable op and loss; each
//! case returns the worst autodiff-vs-central-difference relative error.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use xmodal::camera::DepthMap;
use xmodal::losses::{
    coarse_loss, confidence_loss, confidence_targets, error_maps, masked_l1, silog_loss,
    total_loss, DepthPrediction, LossWeights,
};
use xmodal::tensor::{grad_check, GatherEntry, GatherMap, Tape, Tensor, Var};
use xmodal::Result;

use super::{rand_signed, rand_tensor};

pub const EPS: f64 = 1e-6;

pub type Case = fn(&mut ChaCha8Rng) -> f64;

/// Every op and loss case, by name.
pub const ALL: [(&str, Case); 16] = [
    ("binary_ops", binary_ops),
    ("broadcast_mul_div", broadcast_mul_div),
    ("matmul_transpose", matmul_transpose),
    ("conv2d", conv2d),
    ("activations", activations),
    ("softmax", softmax),
    ("shape_ops", shape_ops),
    ("resize_bilinear", resize_bilinear),
    ("gather", gather),
    ("clamp_min", clamp_min),
    ("l1", l1),
    ("coarse_loss", coarse),
    ("confidence_loss", confidence),
    ("silog", silog),
    ("total_loss", total),
    ("sum_mean", mean_sum),
];

/// `sum(y ⊙ r)` so every output component contributes with its own weight.
fn weighted<'t>(y: Var<'t>, r: &Tensor) -> Result<Var<'t>> {
    let w = y.tape().constant(r.clone());
    Ok(y.mul(&w)?.sum())
}

fn weights_for(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    rand_tensor(rng, shape, 0.5, 1.5)
}

fn check<F>(f: F, x: &Tensor) -> f64
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    grad_check(f, x, EPS).unwrap()
}

pub fn binary_ops(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [2, 3, 4];
    let x = rand_signed(rng, &shape, 0.3, 2.0);
    let other = rand_signed(rng, &shape, 0.3, 2.0);
    let r = weights_for(rng, &shape);
    let mut worst: f64 = 0.0;
    for kind in 0..4 {
        for as_lhs in [true, false] {
            worst = worst.max(check(
                |t, v| {
                    let o = t.constant(other.clone());
                    let (a, b) = if as_lhs { (v, o) } else { (o, v) };
                    let y = match kind {
                        0 => a.add(&b)?,
                        1 => a.sub(&b)?,
                        2 => a.mul(&b)?,
                        _ => a.div(&b)?,
                    };
                    weighted(y, &r)
                },
                &x,
            ));
        }
    }
    worst
}

pub fn broadcast_mul_div(rng: &mut ChaCha8Rng) -> f64 {
    let feat = rand_signed(rng, &[3, 4, 5], 0.2, 1.5);
    let map = rand_signed(rng, &[1, 4, 5], 0.3, 1.5);
    let r = weights_for(rng, &[3, 4, 5]);
    [
        check(|t, m| weighted(t.constant(feat.clone()).mul(&m)?, &r), &map),
        check(|t, f| weighted(f.mul(&t.constant(map.clone()))?, &r), &feat),
        check(|t, m| weighted(t.constant(feat.clone()).div(&m)?, &r), &map),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn matmul_transpose(rng: &mut ChaCha8Rng) -> f64 {
    let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
    let a = rand_tensor(rng, &[m, k], -1.0, 1.0);
    let b = rand_tensor(rng, &[k, n], -1.0, 1.0);
    let r = weights_for(rng, &[m, n]);
    let rt = weights_for(rng, &[k, m]);
    [
        check(|t, v| weighted(v.matmul(&t.constant(b.clone()))?, &r), &a),
        check(|t, v| weighted(t.constant(a.clone()).matmul(&v)?, &r), &b),
        check(|_, v| weighted(v.transpose()?, &rt), &a),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Random kernel size, stride and padding; gradients for input, kernel and
/// bias. Channel counts reach the im2col path as well as the direct one.
pub fn conv2d(rng: &mut ChaCha8Rng) -> f64 {
    let c_in = rng.random_range(1..9);
    let c_out = rng.random_range(1..4);
    let k = [1, 3, 5][rng.random_range(0..3)];
    let stride = rng.random_range(1..3);
    let pad = rng.random_range(0..=k / 2);
    let (h, w) = (rng.random_range(k..k + 5), rng.random_range(k..k + 5));
    let x = rand_tensor(rng, &[c_in, h, w], -1.0, 1.0);
    let kern = rand_tensor(rng, &[c_out, c_in, k, k], -1.0, 1.0);
    let bias = rand_tensor(rng, &[c_out], -1.0, 1.0);
    let (oh, ow) = ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1);
    let r = weights_for(rng, &[c_out, oh, ow]);
    [
        check(
            |t, v| weighted(v.conv2d(&t.constant(kern.clone()), &t.constant(bias.clone()), stride, pad)?, &r),
            &x,
        ),
        check(
            |t, v| weighted(t.constant(x.clone()).conv2d(&v, &t.constant(bias.clone()), stride, pad)?, &r),
            &kern,
        ),
        check(
            |t, v| weighted(t.constant(x.clone()).conv2d(&t.constant(kern.clone()), &v, stride, pad)?, &r),
            &bias,
        ),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// All eight elementwise activations. Inputs stay away from the kinks of
/// leaky-relu/abs and inside the domains of log/sqrt.
pub fn activations(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [2, 3, 3];
    let mut worst: f64 = 0.0;
    for kind in 0..8 {
        let x = match kind {
            3 | 4 => rand_tensor(rng, &shape, 0.2, 3.0),
            _ => rand_signed(rng, &shape, 0.05, 2.0),
        };
        let r = weights_for(rng, &shape);
        worst = worst.max(check(
            |_, v| {
                let y = match kind {
                    0 => v.leaky_relu(0.1),
                    1 => v.sigmoid(),
                    2 => v.exp(),
                    3 => v.log()?,
                    4 => v.sqrt()?,
                    5 => v.softplus(),
                    6 => v.abs(),
                    _ => v.square(),
                };
                weighted(y, &r)
            },
            &x,
        ));
    }
    worst
}

pub fn softmax(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[3, 5], -2.0, 2.0);
    let r = rand_tensor(rng, &[3, 5], -1.0, 1.0);
    (0..2)
        .map(|axis| check(|_, v| weighted(v.softmax(axis)?, &r), &x))
        .fold(0.0, f64::max)
}

pub fn shape_ops(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[3, 4, 5], -1.0, 1.0);
    let y = rand_tensor(rng, &[2, 4, 5], -1.0, 1.0);
    let rs = weights_for(rng, &[3, 2, 5]);
    let rc = weights_for(rng, &[5, 4, 5]);
    let rr = weights_for(rng, &[12, 5]);
    let ra = weights_for(rng, &[3, 5]);
    let rf = weights_for(rng, &[3, 4, 5]);
    [
        check(|_, v| weighted(v.slice(1, 1, 2)?, &rs), &x),
        check(|t, v| weighted(t.concat(&[v, t.constant(y.clone())], 0)?, &rc), &x),
        check(|_, v| weighted(v.reshape(&[12, 5])?, &rr), &x),
        check(|_, v| weighted(v.sum_axis(1)?.reshape(&[3, 5])?, &ra), &x),
        check(|_, v| weighted(v.affine(-2.5, 0.7), &rf), &x),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn mean_sum(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[3, 4, 5], -1.0, 1.0);
    check(|_, v| v.mean().scale(3.0).add(&v.sum()), &x)
}

pub fn resize_bilinear(rng: &mut ChaCha8Rng) -> f64 {
    let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
    let (oh, ow) = (rng.random_range(1..9), rng.random_range(1..9));
    let x = rand_tensor(rng, &[2, h, w], -1.0, 1.0);
    let r = weights_for(rng, &[2, oh, ow]);
    check(|_, v| weighted(v.resize_bilinear(oh, ow)?, &r), &x)
}

pub fn gather(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[1, 3, 3], 0.5, 3.0);
    let entries = (0..12)
        .map(|_| {
            rng.random_bool(0.8).then(|| GatherEntry {
                src: rng.random_range(0..9),
                scale: rng.random_range(0.5..2.0),
                offset: rng.random_range(-0.5..0.5),
            })
        })
        .collect();
    let map = Rc::new(GatherMap::new(vec![1, 3, 4], entries).unwrap());
    let r = weights_for(rng, &[1, 3, 4]);
    check(|_, v| weighted(v.gather(Rc::clone(&map))?, &r), &x)
}

/// Floor well away from every element: either all pass or all clamp.
pub fn clamp_min(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[1, 3, 3], 0.5, 3.0);
    let r = weights_for(rng, &[1, 3, 3]);
    let floor = if rng.random_bool(0.5) { 0.1 } else { 5.0 };
    check(|_, v| weighted(v.clamp_min(floor), &r), &x)
}

fn gt_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> DepthMap {
    let mut valid: Vec<bool> = (0..h * w).map(|_| rng.random_bool(0.85)).collect();
    valid[0] = true;
    let values = valid
        .iter()
        .map(|&ok| if ok { rng.random_range(2.0..20.0) } else { 0.0 })
        .collect();
    DepthMap::new(h, w, values, valid).unwrap()
}

/// Prediction offset from the ground truth by at least 0.05 m so |·| stays
/// differentiable under the finite-difference step.
fn offset_pred(rng: &mut ChaCha8Rng, gt: &DepthMap) -> Tensor {
    let noise = rand_signed(rng, &[1, gt.height(), gt.width()], 0.05, 1.5);
    let base = gt.values().iter().map(|&g| if g > 0.0 { g } else { 5.0 });
    Tensor::new(
        vec![1, gt.height(), gt.width()],
        base.zip(noise.data()).map(|(g, n)| g + n).collect(),
    )
    .unwrap()
}

pub fn l1(rng: &mut ChaCha8Rng) -> f64 {
    let gt = gt_map(rng, 4, 5);
    let d = offset_pred(rng, &gt);
    check(|_, v| masked_l1(&DepthPrediction::dense(v), &gt), &d)
}

pub fn coarse(rng: &mut ChaCha8Rng) -> f64 {
    let gt = gt_map(rng, 4, 5);
    let d_rgb = offset_pred(rng, &gt);
    let d_thr = offset_pred(rng, &gt);
    let holes: Vec<bool> = (0..20).map(|i| i == 0 || rng.random_bool(0.7)).collect();
    let a = check(
        |t, v| {
            let thr = DepthPrediction::masked(t.constant(d_thr.clone()), holes.clone());
            coarse_loss(&DepthPrediction::dense(v), &thr, &gt)
        },
        &d_rgb,
    );
    let b = check(
        |t, v| {
            let rgb = DepthPrediction::dense(t.constant(d_rgb.clone()));
            coarse_loss(&rgb, &DepthPrediction::masked(v, holes.clone()), &gt)
        },
        &d_thr,
    );
    a.max(b)
}

/// `C_THR = 1 − C_RGB`, each `c` at least 0.02 from its target.
pub fn confidence(rng: &mut ChaCha8Rng) -> f64 {
    let gt = gt_map(rng, 4, 4);
    let rgb = DepthMap::from_tensor(&offset_pred(rng, &gt)).unwrap();
    let thr = DepthMap::from_tensor(&offset_pred(rng, &gt)).unwrap();
    let targets = confidence_targets(&error_maps(&gt, &rgb, &thr).unwrap()).unwrap();
    let c = Tensor::new(
        vec![1, 4, 4],
        targets
            .t_rgb
            .iter()
            .map(|&t| {
                let d = rng.random_range(0.02..0.2);
                if t + d < 1.0 && (t - d <= 0.0 || rng.random_bool(0.5)) {
                    t + d
                } else {
                    t - d
                }
            })
            .collect(),
    )
    .unwrap();
    check(|_, v| confidence_loss(&v, &v.affine(-1.0, 1.0), &targets), &c)
}

pub fn silog(rng: &mut ChaCha8Rng) -> f64 {
    let gt = gt_map(rng, 4, 5);
    let d = offset_pred(rng, &gt);
    let lambda = rng.random_range(0.1..1.0);
    check(|_, v| silog_loss(&v, &gt, lambda), &d)
}

pub fn total(rng: &mut ChaCha8Rng) -> f64 {
    let gt = gt_map(rng, 4, 4);
    let d = offset_pred(rng, &gt);
    let w = LossWeights::default();
    check(
        |_, v| {
            let p = DepthPrediction::dense(v);
            let l_coa = coarse_loss(&p, &p, &gt)?;
            let l_con = v.scale(0.0).sum().add_scalar(0.3);
            let l_si = silog_loss(&v, &gt, w.lambda_si)?;
            total_loss(&l_coa, &l_con, &l_si, &w)
        },
        &d,
    )
}
