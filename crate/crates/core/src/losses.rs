//! Training objectives.
//!
//! Every loss is a mean over valid pixels, so its value does not depend on
//! image size or mask coverage. Error maps and confidence targets are built
//! from plain (detached) depth values and never carry gradients.

use crate::camera::DepthMap;
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

/// Log inputs of the SILog loss are clamped from below to this depth (m).
pub const SILOG_MIN_DEPTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Variance factor of the scale-invariant log loss.
    pub lambda_si: f64,
    /// Weight of the confidence loss.
    pub beta: f64,
    /// Weight of the SILog loss.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_si: 0.5,
            beta: 0.8,
            gamma: 0.65,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_si: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = LossWeights {
            lambda_si,
            beta,
            gamma,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_si > 0.0 && self.lambda_si <= 1.0) {
            return Err(Error::invalid(format!(
                "lambda_si must lie in (0, 1], got {}",
                self.lambda_si
            )));
        }
        if !(self.beta > 0.0 && self.gamma > 0.0) {
            return Err(Error::invalid(format!(
                "beta and gamma must be positive, got {} and {}",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

/// A differentiable `[1, H, W]` depth prediction and the pixels where it is
/// defined.
#[derive(Clone, Debug)]
pub struct DepthPrediction<'t> {
    pub depth: Var<'t>,
    pub valid: Vec<bool>,
}

impl<'t> DepthPrediction<'t> {
    pub fn dense(depth: Var<'t>) -> Self {
        let n = depth.value().numel();
        DepthPrediction {
            depth,
            valid: vec![true; n],
        }
    }

    pub fn masked(depth: Var<'t>, valid: Vec<bool>) -> Self {
        DepthPrediction { depth, valid }
    }

    /// Plain-value snapshot.
    pub fn to_depth_map(&self) -> Result<DepthMap> {
        let v = self.depth.value();
        match v.shape() {
            &[1, h, w] => DepthMap::new(h, w, v.data().to_vec(), self.valid.clone()),
            s => Err(Error::shape(format!(
                "depth prediction must be [1,H,W], got {s:?}"
            ))),
        }
    }
}

fn check_extent(pred: &Var<'_>, gt: &DepthMap) -> Result<()> {
    let s = pred.shape();
    if s != [1, gt.height(), gt.width()] {
        return Err(Error::shape(format!(
            "prediction {s:?} vs ground truth {}x{}",
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

fn joint_mask(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(&x, &y)| x && y).collect()
}

fn mask_tensor(mask: &[bool], (h, w): (usize, usize)) -> Tensor {
    let data = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Tensor::new(vec![1, h, w], data).expect("mask matches extent")
}

/// Mean absolute error over pixels valid in both prediction and target.
pub fn masked_l1<'t>(pred: &DepthPrediction<'t>, gt: &DepthMap) -> Result<Var<'t>> {
    check_extent(&pred.depth, gt)?;
    let mask = joint_mask(&pred.valid, gt.valid());
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::invalid("L1 loss over zero valid pixels"));
    }
    let tape = pred.depth.tape();
    let target = tape.constant(gt.to_tensor());
    let m = tape.constant(mask_tensor(&mask, gt.extent()));
    Ok(pred
        .depth
        .sub(&target)?
        .abs()
        .mul(&m)?
        .sum()
        .scale(1.0 / count as f64))
}

/// Mean L1 of the RGB coarse depth plus mean L1 of the warped thermal depth,
/// both against RGB-view ground truth.
pub fn coarse_loss<'t>(
    d_rgb: &DepthPrediction<'t>,
    d_thr_warped: &DepthPrediction<'t>,
    d_gt: &DepthMap,
) -> Result<Var<'t>> {
    masked_l1(d_rgb, d_gt)?.add(&masked_l1(d_thr_warped, d_gt)?)
}

/// Per-pixel absolute depth errors of both modalities.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMaps {
    pub height: usize,
    pub width: usize,
    pub e_rgb: Vec<f64>,
    pub e_thr: Vec<f64>,
    /// Ground truth valid and both predictions valid.
    pub valid: Vec<bool>,
}

pub fn error_maps(d_gt: &DepthMap, d_rgb: &DepthMap, d_thr_warped: &DepthMap) -> Result<ErrorMaps> {
    if d_rgb.extent() != d_gt.extent() || d_thr_warped.extent() != d_gt.extent() {
        return Err(Error::shape(format!(
            "error maps need equal extents: gt {:?}, rgb {:?}, thr {:?}",
            d_gt.extent(),
            d_rgb.extent(),
            d_thr_warped.extent()
        )));
    }
    let valid: Vec<bool> = (0..d_gt.values().len())
        .map(|i| d_gt.valid()[i] && d_rgb.valid()[i] && d_thr_warped.valid()[i])
        .collect();
    let err = |pred: &DepthMap| -> Vec<f64> {
        pred.values()
            .iter()
            .zip(d_gt.values())
            .zip(&valid)
            .map(|((p, g), &ok)| if ok { (g - p).abs() } else { 0.0 })
            .collect()
    };
    Ok(ErrorMaps {
        height: d_gt.height(),
        width: d_gt.width(),
        e_rgb: err(d_rgb),
        e_thr: err(d_thr_warped),
        valid,
    })
}

/// Soft per-pixel targets for the RGB and thermal confidence maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceTargets {
    pub height: usize,
    pub width: usize,
    pub t_rgb: Vec<f64>,
    pub t_thr: Vec<f64>,
    pub valid: Vec<bool>,
}

/// `t_rgb = exp(e_thr) / (exp(e_rgb) + exp(e_thr))`, `t_thr = 1 − t_rgb`.
/// A modality's target is high where the other modality's error is high.
pub fn confidence_targets(errs: &ErrorMaps) -> Result<ConfidenceTargets> {
    if !errs.valid.iter().any(|&v| v) {
        return Err(Error::invalid("confidence targets over zero valid pixels"));
    }
    let mut t_rgb = Vec::with_capacity(errs.e_rgb.len());
    let mut t_thr = Vec::with_capacity(errs.e_rgb.len());
    for (&er, &et) in errs.e_rgb.iter().zip(&errs.e_thr) {
        let m = er.max(et);
        let (a, b) = ((er - m).exp(), (et - m).exp());
        let tr = b / (a + b);
        t_rgb.push(tr);
        t_thr.push(a / (a + b));
    }
    Ok(ConfidenceTargets {
        height: errs.height,
        width: errs.width,
        t_rgb,
        t_thr,
        valid: errs.valid.clone(),
    })
}

/// Mean over valid pixels of `|t_rgb − c_rgb| + |t_thr − c_thr|`.
pub fn confidence_loss<'t>(
    c_rgb: &Var<'t>,
    c_thr: &Var<'t>,
    targets: &ConfidenceTargets,
) -> Result<Var<'t>> {
    let extent = [1, targets.height, targets.width];
    if c_rgb.shape() != extent || c_thr.shape() != extent {
        return Err(Error::shape(format!(
            "confidence maps {:?}/{:?} vs targets {extent:?}",
            c_rgb.shape(),
            c_thr.shape()
        )));
    }
    let count = targets.valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(Error::invalid("confidence loss over zero valid pixels"));
    }
    let tape = c_rgb.tape();
    let hw = (targets.height, targets.width);
    let t_rgb = tape.constant(Tensor::new(extent.to_vec(), targets.t_rgb.clone())?);
    let t_thr = tape.constant(Tensor::new(extent.to_vec(), targets.t_thr.clone())?);
    let m = tape.constant(mask_tensor(&targets.valid, hw));
    let per_pixel = t_rgb.sub(c_rgb)?.abs().add(&t_thr.sub(c_thr)?.abs())?;
    Ok(per_pixel.mul(&m)?.sum().scale(1.0 / count as f64))
}

/// Scale-invariant log loss `sqrt(mean(Δ²) − λ·mean(Δ)²)` with
/// `Δ = log d_gt − log d` over pixels valid in `d_gt`.
pub fn silog_loss<'t>(d: &Var<'t>, d_gt: &DepthMap, lambda_si: f64) -> Result<Var<'t>> {
    check_extent(d, d_gt)?;
    let count = d_gt.valid_count();
    if count == 0 {
        return Err(Error::invalid("SILog loss over zero valid pixels"));
    }
    let pred = d.value();
    if let Some((&p, _)) = pred
        .data()
        .iter()
        .zip(d_gt.valid())
        .find(|(&p, &ok)| ok && !(p > 0.0))
    {
        return Err(Error::Domain(format!(
            "SILog needs positive predictions on valid pixels, got {p}"
        )));
    }
    let tape = d.tape();
    let log_gt: Vec<f64> = d_gt
        .values()
        .iter()
        .zip(d_gt.valid())
        .map(|(&g, &ok)| if ok { g.ln() } else { 0.0 })
        .collect();
    let log_gt = tape.constant(Tensor::new(vec![1, d_gt.height(), d_gt.width()], log_gt)?);
    let m = tape.constant(d_gt.mask_tensor());
    let delta = log_gt.sub(&d.clamp_min(SILOG_MIN_DEPTH).log()?)?.mul(&m)?;
    let k = count as f64;
    let mean_sq = delta.square().sum().scale(1.0 / k);
    let mean = delta.sum().scale(1.0 / k);
    let var = mean_sq.sub(&mean.square().scale(lambda_si))?;
    if var.item().is_some_and(|v| v > 0.0) {
        var.sqrt()
    } else {
        // Zero at the optimum; its subgradient is zero as well.
        Ok(var.scale(0.0))
    }
}

/// `l_coa + β·l_con + γ·l_silog`.
pub fn total_loss<'t>(
    l_coa: &Var<'t>,
    l_con: &Var<'t>,
    l_silog: &Var<'t>,
    w: &LossWeights,
) -> Result<Var<'t>> {
    for (name, v) in [("coarse", l_coa), ("confidence", l_con), ("silog", l_silog)] {
        if v.value().numel() != 1 {
            return Err(Error::shape(format!("{name} loss is not a scalar")));
        }
    }
    l_coa
        .add(&l_con.scale(w.beta))?
        .add(&l_silog.scale(w.gamma))
}
