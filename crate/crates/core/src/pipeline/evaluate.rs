use std::fmt;
use std::path::Path;

use crate::camera::DepthMap;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_depth, MetricsRecord};
use crate::scenes::{Scenario, SceneSample};
use crate::tensor::{Tape, Tensor};

use super::checkpoint::Checkpoint;
use super::config::{Ablation, Config};
use super::forward::{forward, BoundModel, Inputs};
use super::train::load_split;

/// Whose depth is scored: the two coarse baselines or the fused output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Rgb,
    Thr,
    Fused,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rgb, Method::Thr, Method::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rgb => "rgb",
            Method::Thr => "thr",
            Method::Fused => "fused",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scenario label of the aggregate rows.
pub const AGGREGATE: &str = "all";

/// All three depths of one sample in the RGB view, plus `C_RGB`.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub rgb: DepthMap,
    /// Thermal coarse depth carried into the RGB view; holes are invalid.
    pub thr: DepthMap,
    pub fused: DepthMap,
    /// `[1, H, W]` in `[0, 1]`.
    pub confidence: Tensor,
}

impl Prediction {
    pub fn get(&self, m: Method) -> &DepthMap {
        match m {
            Method::Rgb => &self.rgb,
            Method::Thr => &self.thr,
            Method::Fused => &self.fused,
        }
    }
}

/// Runs the pipeline without gradients.
pub fn predict(ck: &Checkpoint, x: &Inputs<'_>) -> Result<Prediction> {
    let model = ck.model()?;
    let tape = Tape::new();
    let bound = BoundModel::bind(&ck.params, &tape, false);
    let ablation = Ablation {
        use_cmt: ck.use_cmt,
        use_cpn: ck.use_cpn,
        ..Ablation::default()
    };
    let out = forward(&model, &bound, x, &ablation)?;
    Ok(Prediction {
        rgb: DepthMap::from_tensor(&out.d_rgb.value())?,
        thr: out.d_thr_warped.to_depth_map()?,
        fused: DepthMap::from_tensor(&out.fused.value())?,
        confidence: (*out.conf.c_rgb.value()).clone(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Debug switch: score the ground truth itself instead of predictions.
    pub inject_gt: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub method: Method,
    /// A scenario name or [`AGGREGATE`].
    pub scenario: String,
    pub record: MetricsRecord,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn get(&self, method: Method, scenario: &str) -> Option<&MetricsRecord> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.scenario == scenario)
            .map(|r| &r.record)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("method,scenario,{}\n", MetricsRecord::csv_header());
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.method, r.scenario, r.record.to_csv_row()));
        }
        out
    }
}

/// Scores every sample, then averages per-image records within each
/// (method, scenario) group and over the whole split.
pub fn evaluate_samples(
    ck: &Checkpoint,
    samples: &[SceneSample],
    caps: (f64, f64),
    opts: EvalOptions,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation split is empty"));
    }
    let mut per_image: Vec<(Scenario, [MetricsRecord; 3])> = Vec::with_capacity(samples.len());
    for s in samples {
        let gt = &s.d_gt_rgb;
        let pred = if opts.inject_gt {
            None
        } else {
            Some(predict(
                ck,
                &Inputs {
                    i_rgb: &s.i_rgb,
                    i_thr: &s.i_thr,
                    rig: &s.rig,
                },
            )?)
        };
        let score = |m: Method| match &pred {
            Some(p) => evaluate_depth(p.get(m), gt, caps.0, caps.1),
            None => evaluate_depth(gt, gt, caps.0, caps.1),
        };
        per_image.push((
            s.scenario,
            [score(Method::Rgb)?, score(Method::Thr)?, score(Method::Fused)?],
        ));
    }
    let mut report = EvalReport::default();
    let groups = Scenario::ALL
        .iter()
        .map(|s| (s.as_str(), Some(*s)))
        .chain([(AGGREGATE, None)]);
    for (label, filter) in groups {
        let members: Vec<&[MetricsRecord; 3]> = per_image
            .iter()
            .filter(|(sc, _)| filter.is_none_or(|f| f == *sc))
            .map(|(_, r)| r)
            .collect();
        if members.is_empty() {
            report
                .warnings
                .push(format!("scenario {label} has no samples; skipped"));
            continue;
        }
        for (mi, method) in Method::ALL.into_iter().enumerate() {
            let recs: Vec<MetricsRecord> = members.iter().map(|r| r[mi]).collect();
            report.rows.push(EvalRow {
                method,
                scenario: label.to_string(),
                record: MetricsRecord::mean(&recs).expect("group is non-empty"),
            });
        }
    }
    Ok(report)
}

/// Loads `ckpt` and scores `split` of the configured dataset.
pub fn evaluate(cfg: &Config, ckpt: &Path, split: &str, opts: EvalOptions) -> Result<EvalReport> {
    let ck = Checkpoint::load(ckpt)?;
    let samples = load_split(&cfg.dataset_root, split)?;
    evaluate_samples(&ck, &samples, cfg.eval_caps, opts)
}
