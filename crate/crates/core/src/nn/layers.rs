use super::params::BoundParams;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

pub(crate) const LEAKY_SLOPE: f64 = 0.1;
const NORM_EPS: f64 = 1e-5;

/// Zero-padded "same" convolution (or strided) using `{name}.weight/bias`.
pub(crate) fn conv<'t>(
    p: &BoundParams<'t>,
    name: &str,
    x: &Var<'t>,
    stride: usize,
) -> Result<Var<'t>> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    let k = w.shape()[2];
    x.conv2d(&w, &b, stride, k / 2)
}

pub(crate) fn conv_act<'t>(
    p: &BoundParams<'t>,
    name: &str,
    x: &Var<'t>,
    stride: usize,
) -> Result<Var<'t>> {
    Ok(conv(p, name, x, stride)?.leaky_relu(LEAKY_SLOPE))
}

/// Per-channel normalization over spatial positions followed by the learned
/// affine `{name}.gamma`, `{name}.beta`.
pub(crate) fn channel_norm<'t>(p: &BoundParams<'t>, name: &str, x: &Var<'t>) -> Result<Var<'t>> {
    let s = x.shape();
    let (c, hw) = (s[0], s[1] * s[2]);
    let flat = x.reshape(&[c, hw])?;
    let mean = flat.sum_axis(1)?.scale(1.0 / hw as f64);
    let centered = flat.sub(&mean)?;
    let var = centered.square().sum_axis(1)?.scale(1.0 / hw as f64);
    let normed = centered.div(&var.add_scalar(NORM_EPS).sqrt()?)?;
    let gamma = p.get(&format!("{name}.gamma"))?;
    let beta = p.get(&format!("{name}.beta"))?;
    normed.reshape(&s)?.mul(&gamma)?.add(&beta)
}

/// Maps logits into the open depth interval `(d_min, d_max)`.
pub(crate) fn depth_range<'t>(logits: &Var<'t>, d_min: f64, d_max: f64) -> Var<'t> {
    logits.sigmoid().affine(d_max - d_min, d_min)
}

/// Constant `[1, H, W]` tensor of ones and zeros built from a mask.
pub(crate) fn mask_var<'t>(
    tape: &'t Tape,
    mask: &[bool],
    (h, w): (usize, usize),
) -> Result<Var<'t>> {
    if mask.len() != h * w {
        return Err(Error::shape(format!("mask of {} for {h}x{w}", mask.len())));
    }
    let data = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Ok(tape.constant(Tensor::new(vec![1, h, w], data)?))
}

pub(crate) fn spatial(x: &Var<'_>) -> Result<(usize, usize)> {
    match x.shape().as_slice() {
        &[_, h, w] => Ok((h, w)),
        s => Err(Error::shape(format!("expected [C,H,W], got {s:?}"))),
    }
}

pub(crate) fn expect_channels(x: &Var<'_>, c: usize, what: &str) -> Result<()> {
    let s = x.shape();
    if s.len() != 3 || s[0] != c {
        return Err(Error::shape(format!(
            "{what}: expected {c} channels, got {s:?}"
        )));
    }
    Ok(())
}
