//! Procedural RGB + thermal scenes with exact ground-truth depth.
//!
//! The world frame is the RGB camera frame. Scenes are a tilted background
//! wall plus a few spheres and axis-aligned boxes, each with an albedo and a
//! temperature. RGB is Lambertian shading of a world-space checker texture;
//! thermal is the normalized temperature of whatever the ray hits.

mod corpus;
mod degrade;
mod generate;

pub use corpus::{
    generate_corpus, sample_seed, CorpusOptions, ScenarioMix, SplitRatios, SPLIT_NAMES,
};
pub use degrade::{blur, degrade, Degradation};
pub use generate::{random_rig, random_spec, SceneRanges};

use std::fmt;
use std::str::FromStr;

use crate::camera::{CameraRig, DepthMap, Point3};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Temperatures map linearly onto thermal intensity over this range.
pub const THERMAL_RANGE: (f64, f64) = (270.0, 330.0);

/// World-space period of the checker texture in meters.
pub const CHECKER_PERIOD: f64 = 1.0;

/// Thermal pixels average this many rays per axis.
pub const THERMAL_SUPERSAMPLE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Day,
    Night,
    Rain,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Day, Scenario::Night, Scenario::Rain];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Day => "day",
            Scenario::Night => "night",
            Scenario::Rain => "rain",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "day" => Ok(Scenario::Day),
            "night" => Ok(Scenario::Night),
            "rain" => Ok(Scenario::Rain),
            other => Err(Error::invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Infinite plane through `point` with unit `normal`.
    Plane {
        point: Point3,
        normal: Point3,
    },
    Sphere {
        center: Point3,
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        center: Point3,
        half: Point3,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub albedo: [f64; 3],
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub ambient_light: f64,
    /// Unit vector pointing towards the light.
    pub light_dir: Point3,
    pub rig: CameraRig,
    pub scenario: Scenario,
    pub seed: u64,
}

/// One rendered record.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub i_rgb: Tensor,
    pub i_thr: Tensor,
    pub d_gt_rgb: DepthMap,
    pub d_gt_thr: DepthMap,
    pub rig: CameraRig,
    pub scenario: Scenario,
    pub seed: u64,
}

/// Nearest intersection along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Ray parameter; with a direction of unit Z component this is Z-depth.
    pub t: f64,
    pub primitive: usize,
    pub point: Point3,
    pub normal: Point3,
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn along(o: Point3, d: Point3, t: f64) -> Point3 {
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}

fn normalize(v: Point3) -> Point3 {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

const T_EPS: f64 = 1e-9;

/// Smallest positive `t` and the outward normal there.
fn intersect(shape: &Shape, o: Point3, d: Point3) -> Option<(f64, Point3)> {
    match *shape {
        Shape::Plane { point, normal } => {
            let den = dot(normal, d);
            if den.abs() < 1e-12 {
                return None;
            }
            let t = dot(normal, sub(point, o)) / den;
            let n = if den > 0.0 {
                [-normal[0], -normal[1], -normal[2]]
            } else {
                normal
            };
            (t > T_EPS).then_some((t, n))
        }
        Shape::Sphere { center, radius } => {
            let oc = sub(o, center);
            let a = dot(d, d);
            let b = dot(oc, d);
            let c = dot(oc, oc) - radius * radius;
            let disc = b * b - a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t = [(-b - sq) / a, (-b + sq) / a]
                .into_iter()
                .find(|&t| t > T_EPS)?;
            Some((t, normalize(sub(along(o, d, t), center))))
        }
        Shape::Box { center, half } => {
            let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
            let (mut axis_near, mut axis_far) = (0, 0);
            for ax in 0..3 {
                let (lo, hi) = (center[ax] - half[ax], center[ax] + half[ax]);
                if d[ax].abs() < 1e-15 {
                    if o[ax] < lo || o[ax] > hi {
                        return None;
                    }
                    continue;
                }
                let (mut t0, mut t1) = ((lo - o[ax]) / d[ax], (hi - o[ax]) / d[ax]);
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                if t0 > t_near {
                    t_near = t0;
                    axis_near = ax;
                }
                if t1 < t_far {
                    t_far = t1;
                    axis_far = ax;
                }
            }
            if t_near > t_far {
                return None;
            }
            let (t, ax, sign) = if t_near > T_EPS {
                (t_near, axis_near, -d[axis_near].signum())
            } else if t_far > T_EPS {
                (t_far, axis_far, d[axis_far].signum())
            } else {
                return None;
            };
            let mut n = [0.0; 3];
            n[ax] = sign;
            Some((t, n))
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::invalid("scene needs at least one primitive"));
        }
        if !(0.0..=1.0).contains(&self.ambient_light) {
            return Err(Error::invalid("ambient_light must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Nearest hit of the ray `o + t·d`; ties go to the earlier primitive.
    pub fn ray_cast(&self, o: Point3, d: Point3) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some((t, normal)) = intersect(&p.shape, o, d) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        primitive: i,
                        point: along(o, d, t),
                        normal,
                    });
                }
            }
        }
        best
    }

    fn shade_rgb(&self, hit: &Hit) -> [f64; 3] {
        let prim = &self.primitives[hit.primitive];
        let cell = hit
            .point
            .iter()
            .map(|c| (c / CHECKER_PERIOD).floor() as i64)
            .sum::<i64>();
        let tex = if cell.rem_euclid(2) == 0 { 1.0 } else { 0.55 };
        let lambert = dot(hit.normal, self.light_dir).max(0.0);
        let light = self.ambient_light + (1.0 - self.ambient_light) * lambert;
        prim.albedo.map(|a| (a * tex * light).clamp(0.0, 1.0))
    }

    fn thermal_intensity(&self, hit: &Hit) -> f64 {
        let (lo, hi) = THERMAL_RANGE;
        ((self.primitives[hit.primitive].temperature - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    /// Ray through pixel `(u, v)` of a camera with the given intrinsics, in
    /// that camera's frame, scaled to unit Z.
    fn pixel_ray(k: &crate::camera::Intrinsics, u: f64, v: f64) -> Point3 {
        [(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0]
    }

    /// Primitive index hit through every RGB pixel center.
    pub fn rgb_ids(&self) -> Vec<Option<usize>> {
        let k = &self.rig.k_rgb;
        (0..k.height * k.width)
            .map(|i| {
                let d = Self::pixel_ray(k, (i % k.width) as f64, (i / k.width) as f64);
                self.ray_cast([0.0; 3], d).map(|h| h.primitive)
            })
            .collect()
    }

    /// Primitive index hit through every thermal pixel center.
    pub fn thr_ids(&self) -> Vec<Option<usize>> {
        let k = &self.rig.k_thr;
        (0..k.height * k.width)
            .map(|i| {
                let (o, d) = self.thermal_ray((i % k.width) as f64, (i / k.width) as f64);
                self.ray_cast(o, d).map(|h| h.primitive)
            })
            .collect()
    }

    /// Thermal pixel ray in the world (RGB) frame; the direction keeps unit
    /// thermal-frame Z so `t` is the thermal Z-depth.
    fn thermal_ray(&self, u: f64, v: f64) -> (Point3, Point3) {
        let e = &self.rig.e_thr_to_rgb;
        let d = Self::pixel_ray(&self.rig.k_thr, u, v);
        let r = e.rotation();
        let dw = [dot(r[0], d), dot(r[1], d), dot(r[2], d)];
        (e.translation(), dw)
    }
}

/// Ray-casts both views. RGB uses one ray per pixel center; thermal
/// intensity averages a `THERMAL_SUPERSAMPLE²` grid of rays per pixel while
/// thermal depth comes from the center ray.
pub fn render_scene(spec: &SceneSpec) -> Result<SceneSample> {
    spec.validate()?;
    let k = spec.rig.k_rgb;
    let (h, w) = k.extent();
    let mut rgb = vec![0.0; 3 * h * w];
    let mut depth = vec![0.0; h * w];
    let mut valid = vec![false; h * w];
    for v in 0..h {
        for u in 0..w {
            let d = SceneSpec::pixel_ray(&k, u as f64, v as f64);
            if let Some(hit) = spec.ray_cast([0.0; 3], d) {
                let i = v * w + u;
                let c = spec.shade_rgb(&hit);
                (0..3).for_each(|ch| rgb[ch * h * w + i] = c[ch]);
                depth[i] = hit.t;
                valid[i] = true;
            }
        }
    }
    if !valid.iter().any(|&b| b) {
        return Err(Error::invalid("no primitive visible in the rgb view"));
    }

    let kt = spec.rig.k_thr;
    let (th, tw) = kt.extent();
    let ss = THERMAL_SUPERSAMPLE;
    let mut thr = vec![0.0; th * tw];
    let mut tdepth = vec![0.0; th * tw];
    let mut tvalid = vec![false; th * tw];
    for v in 0..th {
        for u in 0..tw {
            let i = v * tw + u;
            let (o, d) = spec.thermal_ray(u as f64, v as f64);
            if let Some(hit) = spec.ray_cast(o, d) {
                tdepth[i] = hit.t;
                tvalid[i] = true;
            }
            let mut acc = 0.0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let du = (sx as f64 + 0.5) / ss as f64 - 0.5;
                    let dv = (sy as f64 + 0.5) / ss as f64 - 0.5;
                    let (o, d) = spec.thermal_ray(u as f64 + du, v as f64 + dv);
                    acc += spec
                        .ray_cast(o, d)
                        .map_or(0.0, |h| spec.thermal_intensity(&h));
                }
            }
            thr[i] = acc / (ss * ss) as f64;
        }
    }
    if !tvalid.iter().any(|&b| b) {
        return Err(Error::invalid("no primitive visible in the thermal view"));
    }
    Ok(SceneSample {
        i_rgb: Tensor::new(vec![3, h, w], rgb)?,
        i_thr: Tensor::new(vec![1, th, tw], thr)?,
        d_gt_rgb: DepthMap::new(h, w, depth, valid)?,
        d_gt_thr: DepthMap::new(th, tw, tdepth, tvalid)?,
        rig: spec.rig,
        scenario: spec.scenario,
        seed: spec.seed,
    })
}
