use rand::Rng;

use super::{normalize, render_scene, Primitive, Scenario, SceneSample, SceneSpec, Shape};
use crate::camera::{CameraRig, ExtrinsicsSE3, Intrinsics};
use crate::error::{Error, Result};

/// Sampling ranges for random scenes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneRanges {
    /// RGB extent `(height, width)`; thermal is half of it per axis.
    pub rgb_extent: (usize, usize),
    pub primitives: (usize, usize),
    pub depth: (f64, f64),
    pub baseline: (f64, f64),
}

impl Default for SceneRanges {
    fn default() -> Self {
        SceneRanges {
            rgb_extent: (64, 64),
            primitives: (2, 6),
            depth: (2.0, 20.0),
            baseline: (0.05, 0.2),
        }
    }
}

const MAX_ATTEMPTS: usize = 1000;

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

/// RGB camera with a roughly 53° field of view and a half-resolution
/// thermal camera with a wider one, offset by a small baseline and rotation.
pub fn random_rig<R: Rng>(rng: &mut R, ranges: &SceneRanges) -> Result<CameraRig> {
    let (h, w) = ranges.rgb_extent;
    if h < 4 || w < 4 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!(
            "rgb extent {h}x{w} must be even and at least 4"
        )));
    }
    let f = uniform(rng, (0.95, 1.05)) * w as f64;
    let k_rgb = Intrinsics::new(
        f,
        f,
        (w as f64 - 1.0) / 2.0 + uniform(rng, (-1.0, 1.0)),
        (h as f64 - 1.0) / 2.0 + uniform(rng, (-1.0, 1.0)),
        w,
        h,
    )?;
    let (th, tw) = (h / 2, w / 2);
    let ft = uniform(rng, (0.72, 0.8)) * tw as f64;
    let k_thr = Intrinsics::new(
        ft,
        ft,
        (tw as f64 - 1.0) / 2.0 + uniform(rng, (-0.5, 0.5)),
        (th as f64 - 1.0) / 2.0 + uniform(rng, (-0.5, 0.5)),
        tw,
        th,
    )?;
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let dir = normalize([side, uniform(rng, (-0.3, 0.3)), uniform(rng, (-0.1, 0.1))]);
    let b = uniform(rng, ranges.baseline);
    let axis = normalize([
        uniform(rng, (-1.0, 1.0)),
        uniform(rng, (-1.0, 1.0)),
        uniform(rng, (-1.0, 1.0)),
    ]);
    let angle = uniform(rng, (0.0, 2.0f64.to_radians()));
    let e = ExtrinsicsSE3::from_axis_angle(axis, angle, dir.map(|c| c * b))?;
    CameraRig::new(k_rgb, k_thr, e)
}

fn random_albedo<R: Rng>(rng: &mut R) -> [f64; 3] {
    [0; 3].map(|_| uniform(rng, (0.3, 0.95)))
}

/// Spec with a tilted background wall and spheres or boxes in front of it.
fn random_layout<R: Rng>(
    rng: &mut R,
    ranges: &SceneRanges,
    rig: CameraRig,
    scenario: Scenario,
    seed: u64,
) -> SceneSpec {
    let (d_lo, d_hi) = ranges.depth;
    let wall_z = uniform(rng, (0.6 * d_hi, 0.9 * d_hi));
    let tilt = uniform(rng, (0.0, 12f64.to_radians()));
    let az = uniform(rng, (0.0, std::f64::consts::TAU));
    let normal = [tilt.sin() * az.cos(), tilt.sin() * az.sin(), -tilt.cos()];
    let mut primitives = vec![Primitive {
        shape: Shape::Plane {
            point: [0.0, 0.0, wall_z],
            normal,
        },
        albedo: random_albedo(rng),
        temperature: uniform(rng, (280.0, 292.0)),
    }];
    let n_obj = rng.random_range(ranges.primitives.0.max(2) - 1..=ranges.primitives.1.max(2) - 1);
    let k = rig.k_rgb;
    for _ in 0..n_obj {
        let size = uniform(rng, (0.35, 0.9));
        let z = uniform(rng, (d_lo + size + 0.5, 0.6 * d_hi));
        let u = uniform(rng, (0.1, 0.9)) * k.width as f64;
        let v = uniform(rng, (0.1, 0.9)) * k.height as f64;
        let center = [(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z];
        let shape = if rng.random_bool(0.5) {
            Shape::Sphere {
                center,
                radius: size,
            }
        } else {
            let half = [0; 3].map(|_| size * uniform(rng, (0.6, 1.0)));
            Shape::Box { center, half }
        };
        primitives.push(Primitive {
            shape,
            albedo: random_albedo(rng),
            temperature: uniform(rng, (296.0, 326.0)),
        });
    }
    let light_dir = normalize([uniform(rng, (-0.6, 0.6)), uniform(rng, (-0.9, -0.2)), -1.0]);
    SceneSpec {
        primitives,
        ambient_light: uniform(rng, (0.25, 0.45)),
        light_dir,
        rig,
        scenario,
        seed,
    }
}

fn depths_in_range(s: &SceneSample, (lo, hi): (f64, f64)) -> bool {
    [&s.d_gt_rgb, &s.d_gt_thr].iter().all(|d| {
        d.valid_count() == d.values().len() && d.values().iter().all(|&z| z >= lo && z <= hi)
    })
}

/// Draws rigs and layouts until every pixel of both views sees a surface
/// within the depth range; returns the spec and its clean rendering.
pub fn random_spec<R: Rng>(
    rng: &mut R,
    ranges: &SceneRanges,
    scenario: Scenario,
    seed: u64,
) -> Result<(SceneSpec, SceneSample)> {
    for _ in 0..MAX_ATTEMPTS {
        let rig = random_rig(rng, ranges)?;
        let spec = random_layout(rng, ranges, rig, scenario, seed);
        let sample = render_scene(&spec)?;
        if depths_in_range(&sample, ranges.depth) {
            return Ok((spec, sample));
        }
    }
    Err(Error::invalid(format!(
        "no valid scene within {MAX_ATTEMPTS} attempts for depth range {:?}",
        ranges.depth
    )))
}
