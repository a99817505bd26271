//! Binary PPM (P6) and PGM (P5) images. 8-bit images map to `[0, 1]`;
//! depth maps are 16-bit big-endian PGM with meters = value / 256 and 0
//! meaning invalid.

use std::fs;
use std::path::Path;

use crate::camera::DepthMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Depth file units per meter.
pub const DEPTH_SCALE: f64 = 256.0;

/// A decoded PNM image; `samples` are interleaved per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while self.at < self.bytes.len() {
            match self.bytes[self.at] {
                b'#' => {
                    while self.at < self.bytes.len() && self.bytes[self.at] != b'\n' {
                        self.at += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.at += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.at;
        while self.at < self.bytes.len() && !self.bytes[self.at].is_ascii_whitespace() {
            self.at += 1;
        }
        (self.at > start).then(|| &self.bytes[start..self.at])
    }

    fn number(&mut self, what: &str, path: &Path) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::format(path, format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::format(
                    path,
                    format!("bad {what} {:?}", String::from_utf8_lossy(tok)),
                )
            })
    }
}

pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Pnm> {
    let mut hd = Header { bytes, at: 0 };
    let channels = match hd.token() {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::format(path, "not a binary PGM/PPM (P5/P6)")),
    };
    let width = hd.number("width", path)?;
    let height = hd.number("height", path)?;
    let maxval = hd.number("maxval", path)?;
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero image extent"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::format(
            path,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if hd.at >= bytes.len() || !bytes[hd.at].is_ascii_whitespace() {
        return Err(Error::format(path, "truncated header"));
    }
    let raster = &bytes[hd.at + 1..];
    let n = width * height * channels;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    if raster.len() != need {
        return Err(Error::format(
            path,
            format!("raster has {} bytes, expected {need}", raster.len()),
        ));
    }
    let samples: Vec<u16> = if wide {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    if let Some(&s) = samples.iter().find(|&&s| s as usize > maxval) {
        return Err(Error::format(
            path,
            format!("sample {s} exceeds maxval {maxval}"),
        ));
    }
    Ok(Pnm {
        width,
        height,
        channels,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode_pnm(img: &Pnm) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        img.samples
            .iter()
            .for_each(|s| out.extend_from_slice(&s.to_be_bytes()));
    } else {
        out.extend(img.samples.iter().map(|&s| s as u8));
    }
    out
}

pub fn read_pnm(path: &Path) -> Result<Pnm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_planar(img: &Pnm) -> Tensor {
    let (c, hw) = (img.channels, img.width * img.height);
    let scale = img.maxval as f64;
    let mut data = vec![0.0; c * hw];
    for (i, &s) in img.samples.iter().enumerate() {
        data[(i % c) * hw + i / c] = s as f64 / scale;
    }
    Tensor::new(vec![c, img.height, img.width], data).expect("extent matches")
}

fn from_planar(t: &Tensor, channels: usize) -> Result<Pnm> {
    let s = t.shape();
    if s.len() != 3 || s[0] != channels {
        return Err(Error::shape(format!(
            "expected [{channels},H,W] image, got {s:?}"
        )));
    }
    let (h, w) = (s[1], s[2]);
    let hw = h * w;
    let d = t.data();
    let samples = (0..channels * hw)
        .map(|i| (d[(i % channels) * hw + i / channels].clamp(0.0, 1.0) * 255.0).round() as u16)
        .collect();
    Ok(Pnm {
        width: w,
        height: h,
        channels,
        maxval: 255,
        samples,
    })
}

fn read_8bit(path: &Path, channels: usize) -> Result<Tensor> {
    let img = read_pnm(path)?;
    if img.channels != channels || img.maxval != 255 {
        return Err(Error::format(
            path,
            format!(
                "expected {} with maxval 255, got {} channel(s) maxval {}",
                if channels == 3 { "P6" } else { "P5" },
                img.channels,
                img.maxval
            ),
        ));
    }
    Ok(to_planar(&img))
}

/// `[3, H, W]` image in `[0, 1]` from a P6 file.
pub fn read_rgb(path: &Path) -> Result<Tensor> {
    read_8bit(path, 3)
}

/// `[1, H, W]` image in `[0, 1]` from an 8-bit P5 file.
pub fn read_gray(path: &Path) -> Result<Tensor> {
    read_8bit(path, 1)
}

/// Writes `round(255·v)` per sample, values clamped to `[0, 1]`.
pub fn write_rgb(path: &Path, img: &Tensor) -> Result<()> {
    write_bytes(path, &encode_pnm(&from_planar(img, 3)?))
}

pub fn write_gray(path: &Path, img: &Tensor) -> Result<()> {
    write_bytes(path, &encode_pnm(&from_planar(img, 1)?))
}

/// Valid depths become `round(256·d)` clamped to `1..=65535`.
pub fn encode_depth(d: &DepthMap) -> Vec<u8> {
    let samples = d
        .values()
        .iter()
        .zip(d.valid())
        .map(|(&v, &ok)| {
            if ok {
                (v * DEPTH_SCALE).round().clamp(1.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    encode_pnm(&Pnm {
        width: d.width(),
        height: d.height(),
        channels: 1,
        maxval: 65535,
        samples,
    })
}

pub fn decode_depth(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let img = decode_pnm(bytes, path)?;
    if img.channels != 1 || img.maxval != 65535 {
        return Err(Error::format(path, "depth must be P5 with maxval 65535"));
    }
    let values = img
        .samples
        .iter()
        .map(|&s| s as f64 / DEPTH_SCALE)
        .collect();
    let valid = img.samples.iter().map(|&s| s > 0).collect();
    DepthMap::new(img.height, img.width, values, valid)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth(&bytes, path)
}

pub fn write_depth(path: &Path, d: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_depth(d))
}
