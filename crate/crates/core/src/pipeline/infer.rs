use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{encode_depth, encode_pnm, parse_calibration, read_gray, read_rgb, Pnm};
use crate::tensor::Tensor;

use super::checkpoint::Checkpoint;
use super::evaluate::{predict, Prediction};
use super::forward::Inputs;

#[derive(Clone, Debug)]
pub struct InferRequest {
    pub rgb: PathBuf,
    pub thr: PathBuf,
    pub calib: PathBuf,
    pub ckpt: PathBuf,
    pub out: PathBuf,
    pub emit_confidence: bool,
}

#[derive(Debug)]
pub struct InferOutput {
    pub prediction: Prediction,
    pub depth_path: PathBuf,
    pub confidence_path: Option<PathBuf>,
}

/// `<dir>/<stem>_confidence.pgm` next to the depth output.
pub fn confidence_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "depth".into());
    out.with_file_name(format!("{stem}_confidence.pgm"))
}

/// 8-bit grayscale encoding, `round(255·c)`.
pub fn encode_confidence(c: &Tensor) -> Result<Vec<u8>> {
    let s = c.shape();
    if s.len() != 3 || s[0] != 1 {
        return Err(Error::shape(format!("confidence map {s:?} is not [1, H, W]")));
    }
    let img = Pnm {
        width: s[2],
        height: s[1],
        channels: 1,
        maxval: 255,
        samples: c
            .data()
            .iter()
            .map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u16)
            .collect(),
    };
    Ok(encode_pnm(&img))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Predicts fused depth for one image pair. All inputs are read and checked
/// and every output is encoded before the first file is written.
pub fn infer(req: &InferRequest) -> Result<InferOutput> {
    let rig = parse_calibration(&req.calib)?;
    let i_rgb = read_rgb(&req.rgb)?;
    let i_thr = read_gray(&req.thr)?;
    let (h, w) = rig.k_rgb.extent();
    if i_rgb.shape()[1..] != [h, w] {
        return Err(Error::format(
            &req.rgb,
            format!("image is {:?}, calibration says {w}x{h}", &i_rgb.shape()[1..]),
        ));
    }
    let (th, tw) = rig.k_thr.extent();
    if i_thr.shape()[1..] != [th, tw] {
        return Err(Error::format(
            &req.thr,
            format!("image is {:?}, calibration says {tw}x{th}", &i_thr.shape()[1..]),
        ));
    }
    let ck = Checkpoint::load(&req.ckpt)?;
    let prediction = predict(
        &ck,
        &Inputs {
            i_rgb: &i_rgb,
            i_thr: &i_thr,
            rig: &rig,
        },
    )?;
    let depth_bytes = encode_depth(&prediction.fused);
    let conf = if req.emit_confidence {
        Some((confidence_path(&req.out), encode_confidence(&prediction.confidence)?))
    } else {
        None
    };
    write(&req.out, &depth_bytes)?;
    if let Some((path, bytes)) = &conf {
        write(path, bytes)?;
    }
    Ok(InferOutput {
        prediction,
        depth_path: req.out.clone(),
        confidence_path: conf.map(|(p, _)| p),
    })
}
