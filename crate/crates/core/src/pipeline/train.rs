use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::DepthMap;
use crate::error::{Error, Result};
use crate::io::{load_sample, DatasetIndex};
use crate::losses::{
    coarse_loss, confidence_loss, confidence_targets, error_maps, silog_loss, total_loss,
    DepthPrediction, LossWeights,
};
use crate::scenes::SceneSample;
use crate::tensor::{Tape, Tensor, Var};

use super::checkpoint::Checkpoint;
use super::config::{Ablation, Config};
use super::forward::{forward, BoundModel, Inputs, Outputs};
use super::optim::Adam;

pub const LOG_HEADER: &str = "epoch,l_coa,l_con,l_silog,total";

/// Scalar loss values; disabled terms are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub l_coa: f64,
    pub l_con: f64,
    pub l_silog: f64,
    pub total: f64,
}

impl LossValues {
    fn add_scaled(&mut self, o: &LossValues, s: f64) {
        self.l_coa += s * o.l_coa;
        self.l_con += s * o.l_con;
        self.l_silog += s * o.l_silog;
        self.total += s * o.total;
    }

    fn is_finite(&self) -> bool {
        [self.l_coa, self.l_con, self.l_silog, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub struct LossTerms<'t> {
    pub l_coa: Var<'t>,
    pub l_con: Var<'t>,
    pub l_silog: Var<'t>,
    pub total: Var<'t>,
}

impl LossTerms<'_> {
    pub fn values(&self) -> LossValues {
        let v = |x: &Var<'_>| x.item().expect("losses are scalars");
        LossValues {
            l_coa: v(&self.l_coa),
            l_con: v(&self.l_con),
            l_silog: v(&self.l_silog),
            total: v(&self.total),
        }
    }
}

/// Assembles the enabled loss terms for one sample against RGB-view ground
/// truth. Confidence targets come from detached coarse depths.
pub fn sample_losses<'t>(
    out: &Outputs<'t>,
    gt: &DepthMap,
    ablation: &Ablation,
    weights: &LossWeights,
) -> Result<LossTerms<'t>> {
    let tape = out.fused.tape();
    let zero = || tape.constant(Tensor::scalar(0.0));
    let rgb = DepthPrediction::dense(out.d_rgb);
    let l_coa = if ablation.use_l_coa {
        coarse_loss(&rgb, &out.d_thr_warped, gt)?
    } else {
        zero()
    };
    let l_con = if ablation.use_l_con && ablation.use_cpn {
        let errs = error_maps(gt, &rgb.to_depth_map()?, &out.d_thr_warped.to_depth_map()?)?;
        if errs.valid.iter().any(|&v| v) {
            confidence_loss(&out.conf.c_rgb, &out.conf.c_thr, &confidence_targets(&errs)?)?
        } else {
            zero()
        }
    } else {
        zero()
    };
    let l_silog = silog_loss(&out.fused, gt, weights.lambda_si)?;
    let total = total_loss(&l_coa, &l_con, &l_silog, weights)?;
    Ok(LossTerms {
        l_coa,
        l_con,
        l_silog,
        total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub losses: LossValues,
}

impl EpochLog {
    pub fn to_csv_row(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{:.9},{:.9},{:.9},{:.9}",
            self.epoch, l.l_coa, l.l_con, l.l_silog, l.total
        )
    }
}

pub struct TrainReport {
    pub log: Vec<EpochLog>,
    /// One per epoch, in order.
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub model: Checkpoint,
}

pub fn epoch_checkpoint_path(output_dir: &Path, epoch: usize) -> PathBuf {
    output_dir.join(format!("epoch_{epoch:03}.xmdw"))
}

pub fn final_checkpoint_path(output_dir: &Path) -> PathBuf {
    output_dir.join("model.xmdw")
}

pub fn train_log_path(output_dir: &Path) -> PathBuf {
    output_dir.join("train_log.csv")
}

/// Loads every sample of a split into memory.
pub fn load_split(root: &Path, split: &str) -> Result<Vec<SceneSample>> {
    let index = DatasetIndex::load(root)?;
    index.split(split)?.iter().map(load_sample).collect()
}

/// Trains on `cfg.train_split` of `cfg.dataset_root`, writing checkpoints
/// and the loss log under `cfg.output_dir`.
pub fn train(cfg: &Config) -> Result<TrainReport> {
    cfg.validate()?;
    let samples = load_split(&cfg.dataset_root, &cfg.train_split)?;
    train_samples(cfg, &samples, |_| {})
}

/// Training loop on in-memory samples. `on_epoch` sees each log row as it
/// is produced.
pub fn train_samples(
    cfg: &Config,
    samples: &[SceneSample],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let out_dir = &cfg.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = train_log_path(out_dir);
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log_file, "{LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;

    let mut ck = Checkpoint::fresh(cfg)?;
    let model = ck.model()?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7EA1_5EED);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut checkpoints = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossValues::default();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = std::collections::BTreeMap::<String, Tensor>::new();
            let share = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &samples[i];
                let tape = Tape::new();
                let bound = BoundModel::bind(&ck.params, &tape, true);
                let x = Inputs {
                    i_rgb: &s.i_rgb,
                    i_thr: &s.i_thr,
                    rig: &s.rig,
                };
                let out = forward(&model, &bound, &x, &cfg.ablation)?;
                let terms = sample_losses(&out, &s.d_gt_rgb, &cfg.ablation, &cfg.weights)?;
                let values = terms.values();
                if !values.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss at epoch {epoch}, batch {}, sample {}: {values:?}",
                        b + 1,
                        i
                    )));
                }
                sums.add_scaled(&values, 1.0 / samples.len() as f64);
                tape.backward(terms.total.scale(share))?;
                for (k, g) in bound.grads() {
                    match grads.get_mut(&k) {
                        Some(acc) => {
                            let data = acc.data().iter().zip(g.data()).map(|(a, b)| a + b).collect();
                            *acc = Tensor::new(g.shape().to_vec(), data)?;
                        }
                        None => {
                            grads.insert(k, g);
                        }
                    }
                }
            }
            if let Some((k, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite gradient for {k} at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            adam.step(&mut ck.params, &grads)?;
        }
        if !ck.params.all_finite() {
            return Err(Error::Diverged(format!("non-finite parameters after epoch {epoch}")));
        }
        let row = EpochLog {
            epoch,
            losses: sums,
        };
        writeln!(log_file, "{}", row.to_csv_row()).map_err(|e| Error::io(&log_path, e))?;
        let path = epoch_checkpoint_path(out_dir, epoch);
        ck.save(&path)?;
        checkpoints.push(path);
        on_epoch(&row);
        log.push(row);
    }
    let final_checkpoint = final_checkpoint_path(out_dir);
    ck.save(&final_checkpoint)?;
    Ok(TrainReport {
        log,
        checkpoints,
        final_checkpoint,
        model: ck,
    })
}
