//! Depth evaluation metrics.

use std::fmt::Write as _;

use crate::camera::DepthMap;
use crate::error::{Error, Result};

/// Evaluation depth window for outdoor-like scenes (m).
pub const OUTDOOR_CAPS: (f64, f64) = (0.5, 80.0);
/// Evaluation depth window for indoor-like scenes (m).
pub const INDOOR_CAPS: (f64, f64) = (0.1, 10.0);

pub const CSV_COLUMNS: [&str; 8] = [
    "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "n_pixels",
];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub abs_rel: f64,
    pub sq_rel: f64,
    /// Meters.
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

impl MetricsRecord {
    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
            self.n_pixels
        )
        .expect("writing to a String");
        s
    }

    /// Mean of per-image records; `n_pixels` is the total.
    pub fn mean(records: &[MetricsRecord]) -> Option<MetricsRecord> {
        if records.is_empty() {
            return None;
        }
        let n = records.len() as f64;
        let avg = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        Some(MetricsRecord {
            abs_rel: avg(|r| r.abs_rel),
            sq_rel: avg(|r| r.sq_rel),
            rmse: avg(|r| r.rmse),
            rmse_log: avg(|r| r.rmse_log),
            delta1: avg(|r| r.delta1),
            delta2: avg(|r| r.delta2),
            delta3: avg(|r| r.delta3),
            n_pixels: records.iter().map(|r| r.n_pixels).sum(),
        })
    }
}

/// Scores `pred` against `gt` on pixels where the ground truth is valid and
/// inside `[min_depth, max_depth]`. Predictions are clamped to the same
/// window; invalid predictions count as `min_depth`.
pub fn evaluate_depth(
    pred: &DepthMap,
    gt: &DepthMap,
    min_depth: f64,
    max_depth: f64,
) -> Result<MetricsRecord> {
    if pred.extent() != gt.extent() {
        return Err(Error::shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.extent(),
            gt.extent()
        )));
    }
    if !(min_depth > 0.0 && max_depth > min_depth) {
        return Err(Error::invalid(format!(
            "evaluation window [{min_depth}, {max_depth}] is empty or nonpositive"
        )));
    }
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    for i in 0..gt.values().len() {
        let g = gt.values()[i];
        if !gt.valid()[i] || g < min_depth || g > max_depth {
            continue;
        }
        let p = if pred.valid()[i] {
            pred.values()[i].clamp(min_depth, max_depth)
        } else {
            min_depth
        };
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        for (h, t) in hits.iter_mut().zip(thresholds) {
            if ratio < t {
                *h += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid(
            "no ground-truth pixels inside the evaluation window",
        ));
    }
    let k = n as f64;
    Ok(MetricsRecord {
        abs_rel: abs_rel / k,
        sq_rel: sq_rel / k,
        rmse: (sq / k).sqrt(),
        rmse_log: (sq_log / k).sqrt(),
        delta1: hits[0] as f64 / k,
        delta2: hits[1] as f64 / k,
        delta3: hits[2] as f64 / k,
        n_pixels: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let gt = DepthMap::from_values(2, 2, vec![2.0, 4.0, 8.0, 16.0]).unwrap();
        let m = evaluate_depth(&gt, &gt, 0.5, 80.0).unwrap();
        assert_eq!(
            (m.abs_rel, m.rmse, m.delta1, m.n_pixels),
            (0.0, 0.0, 1.0, 4)
        );
    }

    #[test]
    fn uniform_ratio() {
        let gt = DepthMap::from_values(1, 4, vec![2.0, 3.0, 5.0, 10.0]).unwrap();
        let pred =
            DepthMap::from_values(1, 4, gt.values().iter().map(|g| 1.3 * g).collect()).unwrap();
        let m = evaluate_depth(&pred, &gt, 0.5, 80.0).unwrap();
        assert!((m.abs_rel - 0.3).abs() < 1e-15);
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 1.0, 1.0));
    }

    #[test]
    fn holes_count_as_min_depth() {
        let gt = DepthMap::from_values(1, 2, vec![4.0, 4.0]).unwrap();
        let pred = DepthMap::new(1, 2, vec![4.0, 0.0], vec![true, false]).unwrap();
        let m = evaluate_depth(&pred, &gt, 1.0, 10.0).unwrap();
        assert_eq!(m.n_pixels, 2);
        assert!((m.abs_rel - 0.375).abs() < 1e-15);
    }

    #[test]
    fn window_and_errors() {
        let gt = DepthMap::from_values(1, 2, vec![100.0, 0.2]).unwrap();
        assert!(evaluate_depth(&gt, &gt, 0.5, 80.0).is_err());
        let other = DepthMap::from_values(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(evaluate_depth(&other, &gt, 0.5, 80.0).is_err());
    }

    #[test]
    fn csv_row_has_all_columns() {
        let row = MetricsRecord::default().to_csv_row();
        assert_eq!(row.split(',').count(), CSV_COLUMNS.len());
        assert_eq!(
            MetricsRecord::csv_header(),
            "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,n_pixels"
        );
    }
}
