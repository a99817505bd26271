//! The full prediction graph shared by training, evaluation and inference.

use crate::camera::{warp_coords_thr_to_rgb, CameraRig, DepthMap, SplatPlan};
use crate::error::{Error, Result};
use crate::losses::DepthPrediction;
use crate::nn::{BoundParams, ConfidencePair, Model, ModelParams};
use crate::tensor::{Tape, Tensor, Var};

use super::config::Ablation;

/// Network inputs for one rig: planar images in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Inputs<'a> {
    /// `[3, H, W]`.
    pub i_rgb: &'a Tensor,
    /// `[1, h, w]`.
    pub i_thr: &'a Tensor,
    pub rig: &'a CameraRig,
}

pub struct BoundModel<'t> {
    pub coarse_rgb: BoundParams<'t>,
    pub coarse_thr: BoundParams<'t>,
    pub confidence: BoundParams<'t>,
    pub fusion: BoundParams<'t>,
}

impl<'t> BoundModel<'t> {
    pub fn bind(params: &ModelParams, tape: &'t Tape, trainable: bool) -> Self {
        let b = |p: &crate::nn::NetworkParams| {
            if trainable {
                p.bind(tape)
            } else {
                p.bind_frozen(tape)
            }
        };
        BoundModel {
            coarse_rgb: b(&params.coarse_rgb),
            coarse_thr: b(&params.coarse_thr),
            confidence: b(&params.confidence),
            fusion: b(&params.fusion),
        }
    }

    /// Gradients keyed like [`ModelParams::flatten`].
    pub fn grads(&self) -> std::collections::BTreeMap<String, Tensor> {
        let mut out = std::collections::BTreeMap::new();
        for (prefix, p) in [
            ("coarse_rgb", &self.coarse_rgb),
            ("coarse_thr", &self.coarse_thr),
            ("confidence", &self.confidence),
            ("fusion", &self.fusion),
        ] {
            for (name, g) in p.grads() {
                out.insert(format!("{prefix}.{name}"), g);
            }
        }
        out
    }
}

/// Every intermediate the losses and the evaluation need.
pub struct Outputs<'t> {
    pub d_rgb: Var<'t>,
    /// Thermal coarse depth in the thermal view.
    pub d_thr: Var<'t>,
    /// Thermal coarse depth carried into the RGB view, with its hole mask.
    pub d_thr_warped: DepthPrediction<'t>,
    pub i_thr_warped: Var<'t>,
    pub conf: ConfidencePair<'t>,
    pub fused: Var<'t>,
}

/// Supersampling factor applied to the thermal maps before splatting, so
/// that every RGB pixel inside the thermal footprint receives a sample.
pub fn splat_factor(rig: &CameraRig) -> usize {
    let ratio = (rig.k_rgb.fx / rig.k_thr.fx).max(rig.k_rgb.fy / rig.k_thr.fy);
    (1.25 * ratio).ceil().max(1.0) as usize
}

/// Warps a `[1, h, w]` thermal depth and image into the RGB view by
/// forward splatting from a supersampled copy.
fn warp_to_rgb<'t>(
    d_thr: &Var<'t>,
    i_thr: &Var<'t>,
    rig: &CameraRig,
) -> Result<(DepthPrediction<'t>, Var<'t>)> {
    let (h, w) = rig.k_thr.extent();
    let s = splat_factor(rig);
    let (d_up, i_up) = if s > 1 {
        (
            d_thr.resize_bilinear(h * s, w * s)?,
            i_thr.resize_bilinear(h * s, w * s)?,
        )
    } else {
        (*d_thr, *i_thr)
    };
    let d_plain = DepthMap::from_tensor(&d_up.value())?;
    let coords = warp_coords_thr_to_rgb(&d_plain, &rig.with_thermal_scaled(s))?;
    let plan = SplatPlan::build(&coords, rig.k_rgb.extent())?;
    let depth = d_up.gather(plan.depth_gather())?;
    let image = i_up.gather(plan.image_gather(1))?;
    Ok((DepthPrediction::masked(depth, plan.valid()), image))
}

pub fn forward<'t>(
    model: &Model,
    p: &BoundModel<'t>,
    x: &Inputs<'_>,
    ablation: &Ablation,
) -> Result<Outputs<'t>> {
    let tape = p.coarse_rgb.get("head.weight")?.tape();
    let (h, w) = x.rig.k_rgb.extent();
    if x.i_rgb.shape() != [3, h, w] {
        return Err(Error::shape(format!(
            "rgb image {:?} does not match calibration {h}x{w}",
            x.i_rgb.shape()
        )));
    }
    let (th, tw) = x.rig.k_thr.extent();
    if x.i_thr.shape() != [1, th, tw] {
        return Err(Error::shape(format!(
            "thermal image {:?} does not match calibration {th}x{tw}",
            x.i_thr.shape()
        )));
    }
    let i_rgb = tape.constant(x.i_rgb.clone());
    let i_thr = tape.constant(x.i_thr.clone());
    let d_rgb = model.coarse_rgb.forward(&p.coarse_rgb, &i_rgb)?;
    let d_thr = model.coarse_thr.forward(&p.coarse_thr, &i_thr)?;

    let (d_thr_warped, i_thr_warped) = if ablation.use_cmt {
        warp_to_rgb(&d_thr, &i_thr, x.rig)?
    } else {
        (
            DepthPrediction::dense(d_thr.resize_bilinear(h, w)?),
            i_thr.resize_bilinear(h, w)?,
        )
    };

    let conf = if ablation.use_cpn {
        model.confidence.forward(
            &p.confidence,
            &i_rgb,
            &i_thr_warped,
            &d_rgb,
            &d_thr_warped.depth,
            &d_thr_warped.valid,
        )?
    } else {
        let half = tape.constant(Tensor::full(vec![1, h, w], 0.5));
        ConfidencePair {
            c_rgb: half,
            c_thr: half,
        }
    };

    let fused = model.fusion.forward(
        &p.fusion,
        &i_rgb,
        &i_thr_warped,
        &d_rgb,
        &d_thr_warped.depth,
        &conf.c_rgb,
        &conf.c_thr,
    )?;
    Ok(Outputs {
        d_rgb,
        d_thr,
        d_thr_warped,
        i_thr_warped,
        conf,
        fused,
    })
}
