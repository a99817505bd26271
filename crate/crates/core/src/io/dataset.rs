//! Dataset layout `<root>/<split>/<id>/{rgb.ppm, thr.pgm, depth_rgb.pgm,
//! depth_thr.pgm, calib.txt}` plus an optional `meta.txt` carrying the
//! scenario tag and scene seed as `key = value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::calib::{format_calibration, parse_calibration};
use super::pnm::{read_depth, read_gray, read_rgb, write_depth, write_gray, write_rgb};
use crate::error::{Error, Result};
use crate::scenes::{Scenario, SceneSample};

/// Required files of every sample directory.
pub const SAMPLE_FILES: [&str; 5] = [
    "rgb.ppm",
    "thr.pgm",
    "depth_rgb.pgm",
    "depth_thr.pgm",
    "calib.txt",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleFiles {
    pub id: String,
    pub dir: PathBuf,
}

impl SampleFiles {
    pub fn rgb(&self) -> PathBuf {
        self.dir.join("rgb.ppm")
    }

    pub fn thr(&self) -> PathBuf {
        self.dir.join("thr.pgm")
    }

    pub fn depth_rgb(&self) -> PathBuf {
        self.dir.join("depth_rgb.pgm")
    }

    pub fn depth_thr(&self) -> PathBuf {
        self.dir.join("depth_thr.pgm")
    }

    pub fn calib(&self) -> PathBuf {
        self.dir.join("calib.txt")
    }

    pub fn meta(&self) -> PathBuf {
        self.dir.join("meta.txt")
    }
}

/// Splits and their samples, ids sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub splits: BTreeMap<String, Vec<SampleFiles>>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry
                .file_name()
                .into_string()
                .map_err(|_| Error::format(&path, "directory name is not UTF-8"))?;
            out.push((name, path));
        }
    }
    out.sort();
    Ok(out)
}

impl DatasetIndex {
    /// Scans `root`; every sample directory must hold all required files
    /// and ids must be unique across splits.
    pub fn load(root: &Path) -> Result<Self> {
        let mut splits = BTreeMap::new();
        let mut seen = BTreeMap::new();
        for (split, dir) in sorted_subdirs(root)? {
            let mut samples = Vec::new();
            for (id, sdir) in sorted_subdirs(&dir)? {
                for f in SAMPLE_FILES {
                    if !sdir.join(f).is_file() {
                        return Err(Error::format(&sdir, format!("sample {id} lacks {f}")));
                    }
                }
                if let Some(prev) = seen.insert(id.clone(), split.clone()) {
                    return Err(Error::format(
                        &sdir,
                        format!("sample id {id} appears in splits {prev} and {split}"),
                    ));
                }
                samples.push(SampleFiles { id, dir: sdir });
            }
            splits.insert(split, samples);
        }
        Ok(DatasetIndex {
            root: root.to_path_buf(),
            splits,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[SampleFiles]> {
        match self.splits.get(name) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(Error::format(
                self.root.join(name),
                format!("split {name:?} is missing or empty"),
            )),
        }
    }
}

fn parse_meta(path: &Path) -> Result<(Scenario, u64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mut scenario, mut seed) = (Scenario::Day, 0);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
        match k.trim() {
            "scenario" => {
                scenario = v
                    .parse()
                    .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?
            }
            "seed" => {
                seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad seed {v:?}")))?
            }
            other => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("unknown meta key {other:?}"),
                ))
            }
        }
    }
    Ok((scenario, seed))
}

/// Reads and cross-checks one sample. Without `meta.txt` the scenario
/// defaults to day and the seed to 0.
pub fn load_sample(files: &SampleFiles) -> Result<SceneSample> {
    let rig = parse_calibration(&files.calib())?;
    let i_rgb = read_rgb(&files.rgb())?;
    let i_thr = read_gray(&files.thr())?;
    let d_gt_rgb = read_depth(&files.depth_rgb())?;
    let d_gt_thr = read_depth(&files.depth_thr())?;
    let check = |what: &Path, (h, w): (usize, usize), want: (usize, usize)| {
        if (h, w) == want {
            Ok(())
        } else {
            Err(Error::format(
                what,
                format!(
                    "extent {h}x{w} disagrees with calibration {}x{}",
                    want.0, want.1
                ),
            ))
        }
    };
    let ext = |t: &crate::tensor::Tensor| (t.shape()[1], t.shape()[2]);
    check(&files.rgb(), ext(&i_rgb), rig.k_rgb.extent())?;
    check(&files.thr(), ext(&i_thr), rig.k_thr.extent())?;
    check(&files.depth_rgb(), d_gt_rgb.extent(), rig.k_rgb.extent())?;
    check(&files.depth_thr(), d_gt_thr.extent(), rig.k_thr.extent())?;
    let meta = files.meta();
    let (scenario, seed) = if meta.is_file() {
        parse_meta(&meta)?
    } else {
        (Scenario::Day, 0)
    };
    Ok(SceneSample {
        i_rgb,
        i_thr,
        d_gt_rgb,
        d_gt_thr,
        rig,
        scenario,
        seed,
    })
}

/// Writes every file of one sample into `dir`, creating it.
pub fn write_sample(dir: &Path, s: &SceneSample) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rgb(&dir.join("rgb.ppm"), &s.i_rgb)?;
    write_gray(&dir.join("thr.pgm"), &s.i_thr)?;
    write_depth(&dir.join("depth_rgb.pgm"), &s.d_gt_rgb)?;
    write_depth(&dir.join("depth_thr.pgm"), &s.d_gt_thr)?;
    let calib = dir.join("calib.txt");
    fs::write(&calib, format_calibration(&s.rig)).map_err(|e| Error::io(&calib, e))?;
    let meta = dir.join("meta.txt");
    fs::write(
        &meta,
        format!("scenario = {}\nseed = {}\n", s.scenario, s.seed),
    )
    .map_err(|e| Error::io(&meta, e))
}
