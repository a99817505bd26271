//! Calibration text:
//!
//! ```text
//! rgb fx fy cx cy w h
//! thr fx fy cx cy w h
//! R r00 r01 r02 r10 r11 r12 r20 r21 r22   # row-major, thermal -> RGB
//! t tx ty tz                              # meters
//! ```
//!
//! `#` starts a comment; blank lines and extra whitespace are ignored.

use std::fs;
use std::path::Path;

use crate::camera::{orthonormalize, rotation_defect, CameraRig, ExtrinsicsSE3, Intrinsics};
use crate::error::{Error, Result};

/// Rotations whose `max|RᵀR − I|` or `|det R − 1|` reaches this are rejected.
/// Anything below is re-orthonormalized, absorbing text rounding.
pub const CALIB_DEFECT_LIMIT: f64 = 1e-6;

fn numbers(fields: &[&str], n: usize, path: &Path, line: usize) -> Result<Vec<f64>> {
    if fields.len() != n {
        return Err(Error::parse(
            path,
            line,
            format!("expected {n} values, got {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("bad number {f:?}")))
        })
        .collect()
}

fn extent(v: f64, path: &Path, line: usize) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::parse(
            path,
            line,
            format!("image extent {v} is not a positive integer"),
        ))
    }
}

fn intrinsics(v: &[f64], path: &Path, line: usize) -> Result<Intrinsics> {
    let (w, h) = (extent(v[4], path, line)?, extent(v[5], path, line)?);
    Intrinsics::new(v[0], v[1], v[2], v[3], w, h)
        .map_err(|e| Error::parse(path, line, e.to_string()))
}

/// Parses calibration text; `path` only labels errors.
pub fn parse_calibration_str(text: &str, path: &Path) -> Result<CameraRig> {
    let mut k_rgb = None;
    let mut k_thr = None;
    let mut r = None;
    let mut t = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        let Some((&key, rest)) = fields.split_first() else {
            continue;
        };
        let dup = || Error::parse(path, line, format!("duplicate {key:?} line"));
        match key {
            "rgb" => {
                let k = intrinsics(&numbers(rest, 6, path, line)?, path, line)?;
                if k_rgb.replace(k).is_some() {
                    return Err(dup());
                }
            }
            "thr" => {
                let k = intrinsics(&numbers(rest, 6, path, line)?, path, line)?;
                if k_thr.replace(k).is_some() {
                    return Err(dup());
                }
            }
            "R" => {
                let v = numbers(rest, 9, path, line)?;
                let m = [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]];
                let defect = rotation_defect(&m);
                if !(defect < CALIB_DEFECT_LIMIT) {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("R is not a rotation (defect {defect:.3e})"),
                    ));
                }
                if r.replace((orthonormalize(&m), line)).is_some() {
                    return Err(dup());
                }
            }
            "t" => {
                let v = numbers(rest, 3, path, line)?;
                if t.replace([v[0], v[1], v[2]]).is_some() {
                    return Err(dup());
                }
            }
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("unknown calibration key {other:?}"),
                ));
            }
        }
    }
    let last = text.lines().count().max(1);
    let missing = |what: &str| Error::parse(path, last, format!("missing {what:?} line"));
    let k_rgb = k_rgb.ok_or_else(|| missing("rgb"))?;
    let k_thr = k_thr.ok_or_else(|| missing("thr"))?;
    let (r, r_line) = r.ok_or_else(|| missing("R"))?;
    let t = t.ok_or_else(|| missing("t"))?;
    let e = ExtrinsicsSE3::new(r, t).map_err(|e| Error::parse(path, r_line, e.to_string()))?;
    CameraRig::new(k_rgb, k_thr, e)
}

pub fn parse_calibration(path: &Path) -> Result<CameraRig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration_str(&text, path)
}

/// Text form that parses back to the identical rig.
pub fn format_calibration(rig: &CameraRig) -> String {
    let k = |name: &str, k: &Intrinsics| {
        format!(
            "{name} {} {} {} {} {} {}\n",
            k.fx, k.fy, k.cx, k.cy, k.width, k.height
        )
    };
    let r = rig.e_thr_to_rgb.rotation();
    let t = rig.e_thr_to_rgb.translation();
    let rs: Vec<String> = r.iter().flatten().map(|v| v.to_string()).collect();
    format!(
        "{}{}R {}\nt {} {} {}\n",
        k("rgb", &rig.k_rgb),
        k("thr", &rig.k_thr),
        rs.join(" "),
        t[0],
        t[1],
        t[2]
    )
}
