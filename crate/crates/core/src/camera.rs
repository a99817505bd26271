//! Pinhole cameras, rigid transforms and thermal-to-RGB depth warping.
//!
//! Pixel `(u, v)` addresses the center of column `u`, row `v`. Depth is
//! Z-depth along the optical axis. Warping is forward splatting: every
//! thermal pixel is lifted with its depth, moved into the RGB frame,
//! projected, and deposited at the nearest RGB pixel. Collisions keep the
//! smallest depth; exact ties keep the earlier source pixel in row-major
//! order. RGB pixels nobody lands on are holes and stay invalid.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{GatherEntry, GatherMap, Tensor};

/// Points with `z` at or below this are treated as behind the camera.
pub const MIN_PROJECTABLE_Z: f64 = 1e-9;

/// Tolerance of the rotation invariant on [`ExtrinsicsSE3`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

pub type Point3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Geometry(format!(
                "focal lengths must be positive and finite: fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::Geometry(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Intrinsics of the same camera after resampling the image by an
    /// integer factor with the align-corners-false convention.
    pub fn scaled(&self, factor: usize) -> Intrinsics {
        let s = factor as f64;
        Intrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: (self.cx + 0.5) * s - 0.5,
            cy: (self.cy + 0.5) * s - 0.5,
            width: self.width * factor,
            height: self.height * factor,
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}

/// Lifts pixel `(u, v)` at depth `d` to a camera-frame point.
pub fn back_project((u, v): (f64, f64), d: f64, k: &Intrinsics) -> Result<Point3> {
    if !(d > 0.0) {
        return Err(Error::Geometry(format!(
            "back-projection depth must be positive, got {d}"
        )));
    }
    Ok([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d])
}

/// Projects a camera-frame point to pixel coordinates. The result may lie
/// outside the image; callers mask.
pub fn project(p: Point3, k: &Intrinsics) -> Result<(f64, f64)> {
    if !(p[2] > MIN_PROJECTABLE_Z) {
        return Err(Error::Geometry(format!(
            "cannot project point with z = {} (behind or on the camera plane)",
            p[2]
        )));
    }
    Ok((k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy))
}

/// Rigid transform taking thermal-frame points into the RGB frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtrinsicsSE3 {
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

impl ExtrinsicsSE3 {
    pub fn new(r: [[f64; 3]; 3], t: [f64; 3]) -> Result<Self> {
        let err = rotation_defect(&r);
        if !(err < ROTATION_TOLERANCE) {
            return Err(Error::Geometry(format!(
                "not a rotation: orthonormality/determinant defect {err:e}"
            )));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("translation must be finite".into()));
        }
        Ok(ExtrinsicsSE3 { r, t })
    }

    pub fn identity() -> Self {
        ExtrinsicsSE3 {
            r: IDENTITY,
            t: [0.0; 3],
        }
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        ExtrinsicsSE3 { r: IDENTITY, t }
    }

    /// Rotation by `angle` radians about `axis` (normalized here), then `t`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, t: [f64; 3]) -> Result<Self> {
        let n = norm(axis);
        if !(n > 0.0) {
            return Err(Error::Geometry("rotation axis must be nonzero".into()));
        }
        let [x, y, z] = axis.map(|a| a / n);
        let (s, c) = angle.sin_cos();
        let k = 1.0 - c;
        let r = [
            [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
            [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
            [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
        ];
        ExtrinsicsSE3::new(r, t)
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.r
    }

    pub fn translation(&self) -> [f64; 3] {
        self.t
    }

    pub fn transform(&self, p: Point3) -> Point3 {
        let r = &self.r;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.t[2],
        ]
    }

    /// The RGB-to-thermal transform.
    pub fn inverse(&self) -> Self {
        let r = &self.r;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = self.t;
        let neg = |row: [f64; 3]| -(row[0] * t[0] + row[1] * t[1] + row[2] * t[2]);
        ExtrinsicsSE3 {
            r: rt,
            t: [neg(rt[0]), neg(rt[1]), neg(rt[2])],
        }
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Max of `|RᵀR − I|` entries and `|det R − 1|`.
pub fn rotation_defect(r: &[[f64; 3]; 3]) -> f64 {
    if r.iter().flatten().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - want).abs());
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    worst.max((det - 1.0).abs())
}

/// Gram-Schmidt projection of a near-rotation onto SO(3).
pub fn orthonormalize(r: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let unit = |v: [f64; 3]| {
        let n = norm(v);
        v.map(|a| a / n)
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let r0 = unit(r[0]);
    let d = dot(r[1], r0);
    let r1 = unit([
        r[1][0] - d * r0[0],
        r[1][1] - d * r0[1],
        r[1][2] - d * r0[2],
    ]);
    let r2 = [
        r0[1] * r1[2] - r0[2] * r1[1],
        r0[2] * r1[0] - r0[0] * r1[2],
        r0[0] * r1[1] - r0[1] * r1[0],
    ];
    [r0, r1, r2]
}

/// Intrinsics of both cameras plus the thermal-to-RGB transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraRig {
    pub k_rgb: Intrinsics,
    pub k_thr: Intrinsics,
    pub e_thr_to_rgb: ExtrinsicsSE3,
}

impl CameraRig {
    pub fn new(k_rgb: Intrinsics, k_thr: Intrinsics, e_thr_to_rgb: ExtrinsicsSE3) -> Result<Self> {
        k_rgb.validate()?;
        k_thr.validate()?;
        Ok(CameraRig {
            k_rgb,
            k_thr,
            e_thr_to_rgb,
        })
    }

    /// The rig seen through a thermal image resampled by `factor`.
    pub fn with_thermal_scaled(&self, factor: usize) -> CameraRig {
        CameraRig {
            k_thr: self.k_thr.scaled(factor),
            ..*self
        }
    }
}

/// Per-pixel metric depth with a validity mask. Invalid entries hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if n == 0 || values.len() != n || valid.len() != n {
            return Err(Error::shape(format!(
                "depth map {height}x{width} with {} values and {} mask entries",
                values.len(),
                valid.len()
            )));
        }
        if let Some((&v, _)) = values
            .iter()
            .zip(&valid)
            .find(|(v, ok)| **ok && !(**v > 0.0))
        {
            return Err(Error::Geometry(format!(
                "valid depth must be positive, got {v}"
            )));
        }
        let values = values
            .into_iter()
            .zip(&valid)
            .map(|(v, &ok)| if ok { v } else { 0.0 })
            .collect();
        Ok(DepthMap {
            width,
            height,
            values,
            valid,
        })
    }

    /// Marks every strictly positive finite value valid.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        DepthMap::new(height, width, values, valid)
    }

    /// Depth map from a `[1, H, W]` tensor, all pixels valid.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[1, h, w] => DepthMap::new(h, w, t.data().to_vec(), vec![true; h * w]),
            s => Err(Error::shape(format!(
                "depth tensor must be [1,H,W], got {s:?}"
            ))),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.height, self.width], self.values.clone())
            .expect("extents are positive")
    }

    /// Validity mask as a `[1, H, W]` tensor of zeros and ones.
    pub fn mask_tensor(&self) -> Tensor {
        let data = self
            .valid
            .iter()
            .map(|&v| if v { 1.0 } else { 0.0 })
            .collect();
        Tensor::new(vec![1, self.height, self.width], data).expect("extents are positive")
    }
}

/// Where one thermal pixel lands in the RGB view. `depth` is the RGB-frame
/// Z-depth, an affine function `depth_scale * d + depth_offset` of the
/// thermal depth `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpedPixel {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub depth_scale: f64,
    pub depth_offset: f64,
}

/// Per-thermal-pixel RGB-view coordinates in row-major source order.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpCoords {
    pub src_height: usize,
    pub src_width: usize,
    pub pixels: Vec<Option<WarpedPixel>>,
}

/// Moves every valid thermal pixel into the RGB view: back-project with
/// `K_THR`, apply `R·P + t`, project with `K_RGB`. Invalid source pixels and
/// points landing behind the RGB camera become `None`.
pub fn warp_coords_thr_to_rgb(d_thr: &DepthMap, rig: &CameraRig) -> Result<WarpCoords> {
    let k = &rig.k_thr;
    if d_thr.extent() != k.extent() {
        return Err(Error::shape(format!(
            "thermal depth {:?} does not match thermal intrinsics {:?}",
            d_thr.extent(),
            k.extent()
        )));
    }
    let e = &rig.e_thr_to_rgb;
    let r = e.rotation();
    let tz = e.translation()[2];
    let mut pixels = Vec::with_capacity(d_thr.width * d_thr.height);
    for row in 0..d_thr.height {
        for col in 0..d_thr.width {
            let warped = d_thr.get(row, col).and_then(|d| {
                let (u, v) = (col as f64, row as f64);
                let p = back_project((u, v), d, k).ok()?;
                let q = e.transform(p);
                let (pu, pv) = project(q, &rig.k_rgb).ok()?;
                let ray = [(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0];
                let depth_scale = r[2][0] * ray[0] + r[2][1] * ray[1] + r[2][2] * ray[2];
                Some(WarpedPixel {
                    u: pu,
                    v: pv,
                    depth: q[2],
                    depth_scale,
                    depth_offset: tz,
                })
            });
            pixels.push(warped);
        }
    }
    Ok(WarpCoords {
        src_height: d_thr.height,
        src_width: d_thr.width,
        pixels,
    })
}

/// Z-buffer resolution of a forward splat: for every target pixel, the
/// winning source pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatPlan {
    height: usize,
    width: usize,
    src_len: usize,
    winners: Vec<Option<usize>>,
    depth: Vec<f64>,
    depth_map: Rc<GatherMap>,
}

impl SplatPlan {
    pub fn build(coords: &WarpCoords, (height, width): (usize, usize)) -> Result<Self> {
        let src_len = coords.src_height * coords.src_width;
        if coords.pixels.len() != src_len || height == 0 || width == 0 {
            return Err(Error::shape(
                "warp coordinates inconsistent with their extent",
            ));
        }
        let mut winners: Vec<Option<usize>> = vec![None; height * width];
        let mut zbuf = vec![f64::INFINITY; height * width];
        for (src, px) in coords.pixels.iter().enumerate() {
            let Some(px) = px else { continue };
            let (tu, tv) = (px.u.round(), px.v.round());
            if !(tu >= 0.0 && tv >= 0.0 && tu < width as f64 && tv < height as f64) {
                continue;
            }
            let dst = tv as usize * width + tu as usize;
            if px.depth < zbuf[dst] {
                zbuf[dst] = px.depth;
                winners[dst] = Some(src);
            }
        }
        let entries = winners
            .iter()
            .map(|w| {
                w.map(|src| {
                    let px = coords.pixels[src].expect("winners are warped pixels");
                    GatherEntry {
                        src,
                        scale: px.depth_scale,
                        offset: px.depth_offset,
                    }
                })
            })
            .collect();
        let depth = zbuf
            .iter()
            .map(|&z| if z.is_finite() { z } else { 0.0 })
            .collect();
        Ok(SplatPlan {
            height,
            width,
            src_len,
            winners,
            depth,
            depth_map: Rc::new(GatherMap::new(vec![1, height, width], entries)?),
        })
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn winners(&self) -> &[Option<usize>] {
        &self.winners
    }

    pub fn valid(&self) -> Vec<bool> {
        self.winners.iter().map(Option::is_some).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.winners.iter().filter(|w| w.is_some()).count()
    }

    /// The splatted RGB-view depth.
    pub fn depth_map(&self) -> DepthMap {
        DepthMap::new(self.height, self.width, self.depth.clone(), self.valid())
            .expect("splatted depths are positive")
    }

    /// Differentiable form of the splat as a gather from the flattened
    /// `[1, h, w]` thermal depth into `[1, H, W]`.
    pub fn depth_gather(&self) -> Rc<GatherMap> {
        Rc::clone(&self.depth_map)
    }

    /// Gather carrying a `[C, h, w]` image along the splat; holes are zero.
    pub fn image_gather(&self, channels: usize) -> Rc<GatherMap> {
        let plane = self.height * self.width;
        let mut entries = Vec::with_capacity(channels * plane);
        for c in 0..channels {
            entries.extend(self.winners.iter().map(|w| {
                w.map(|src| GatherEntry {
                    src: c * self.src_len + src,
                    scale: 1.0,
                    offset: 0.0,
                })
            }));
        }
        Rc::new(
            GatherMap::new(vec![channels, self.height, self.width], entries)
                .expect("entry count matches shape"),
        )
    }
}

/// Forward-splats thermal depth into the RGB view.
pub fn splat_depth(
    d_thr: &DepthMap,
    coords: &WarpCoords,
    rgb_extent: (usize, usize),
) -> Result<DepthMap> {
    if d_thr.extent() != (coords.src_height, coords.src_width) {
        return Err(Error::shape("warp coordinates do not match thermal depth"));
    }
    Ok(SplatPlan::build(coords, rgb_extent)?.depth_map())
}

/// Carries a `[C, h, w]` thermal image along the same splat as the depth.
/// Returns the resampled image and the shared validity mask.
pub fn resample_image(
    img: &Tensor,
    coords: &WarpCoords,
    target_extent: (usize, usize),
) -> Result<(Tensor, Vec<bool>)> {
    let s = img.shape();
    if s.len() != 3 || (s[1], s[2]) != (coords.src_height, coords.src_width) {
        return Err(Error::shape(format!(
            "image {s:?} does not match warp source {}x{}",
            coords.src_height, coords.src_width
        )));
    }
    let plan = SplatPlan::build(coords, target_extent)?;
    let map = plan.image_gather(s[0]);
    let out = Tensor::new(map.out_shape().to_vec(), map.apply(img.data()))?;
    Ok((out, plan.valid()))
}
