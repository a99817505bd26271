//! Run configuration: a line-oriented `key = value` file.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::OUTDOOR_CAPS;
use crate::nn::{CoarseDepthNetConfig, ConfidenceNetConfig, FusionNetConfig, ModelConfig};

/// Which parts of the pipeline are active. Everything on is the full system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ablation {
    /// Geometric thermal-to-RGB warp; off falls back to a plain resize.
    pub use_cmt: bool,
    /// Learned confidence; off uses a constant 0.5 for both modalities.
    pub use_cpn: bool,
    pub use_l_coa: bool,
    pub use_l_con: bool,
    /// Unscaled `softmax(Q·Kᵀ)` attention logits.
    pub literal_eq8_scaling: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            use_cmt: true,
            use_cpn: true,
            use_l_coa: true,
            use_l_con: true,
            literal_eq8_scaling: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub dataset_root: PathBuf,
    /// Checkpoints and the training log go here.
    pub output_dir: PathBuf,
    pub d_min: f64,
    pub d_max: f64,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_split: String,
    pub coarse_base_channels: usize,
    pub coarse_levels: usize,
    pub confidence_base_channels: usize,
    pub confidence_levels: usize,
    pub feature_channels: usize,
    pub heads: usize,
    pub token_downsample: usize,
    pub ablation: Ablation,
    /// Evaluation depth caps `(min, max)` in meters.
    pub eval_caps: (f64, f64),
}

impl Default for Config {
    fn default() -> Self {
        let m = ModelConfig::default();
        Config {
            dataset_root: PathBuf::from("data"),
            output_dir: PathBuf::from("runs"),
            d_min: m.coarse_rgb.d_min,
            d_max: m.coarse_rgb.d_max,
            weights: LossWeights::default(),
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 4,
            seed: 0,
            train_split: "train".into(),
            coarse_base_channels: m.coarse_rgb.base_channels,
            coarse_levels: m.coarse_rgb.levels,
            confidence_base_channels: m.confidence.base_channels,
            confidence_levels: m.confidence.levels,
            feature_channels: m.fusion.feature_channels,
            heads: m.fusion.heads,
            token_downsample: m.fusion.token_downsample,
            ablation: Ablation::default(),
            eval_caps: OUTDOOR_CAPS,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("invalid value {v:?} for {key}"))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("invalid boolean {v:?} for {key}")),
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.d_min > 0.0 && self.d_min < self.d_max && self.d_max.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < d_min < d_max, got {} and {}",
                self.d_min, self.d_max
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        let (lo, hi) = self.eval_caps;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::invalid(format!("eval caps ({lo}, {hi}) out of order")));
        }
        self.weights.validate()?;
        crate::nn::Model::new(&self.model_config())?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let coarse = |in_channels| CoarseDepthNetConfig {
            in_channels,
            base_channels: self.coarse_base_channels,
            d_min: self.d_min,
            d_max: self.d_max,
            levels: self.coarse_levels,
        };
        ModelConfig {
            coarse_rgb: coarse(3),
            coarse_thr: coarse(1),
            confidence: ConfidenceNetConfig {
                base_channels: self.confidence_base_channels,
                levels: self.confidence_levels,
                depth_scale: self.d_max,
                ..ConfidenceNetConfig::default()
            },
            fusion: FusionNetConfig {
                feature_channels: self.feature_channels,
                heads: self.heads,
                token_downsample: self.token_downsample,
                scaled_logits: !self.ablation.literal_eq8_scaling,
                d_min: self.d_min,
                d_max: self.d_max,
            },
        }
    }

    /// Parses config text. Relative paths are resolved against `base_dir`.
    pub fn parse_str(text: &str, path: &Path, base_dir: &Path) -> Result<Config> {
        let mut cfg = Config::default();
        let mut seen = std::collections::BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(path, line_no, "expected `key = value`"))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(path, line_no, format!("duplicate key {key}")));
            }
            cfg.set(key, value, base_dir)
                .map_err(|msg| Error::parse(path, line_no, msg))?;
        }
        cfg.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Config::parse_str(&text, path, base)
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> std::result::Result<(), String> {
        let path = |v: &str| base.join(v);
        match key {
            "dataset_root" => self.dataset_root = path(v),
            "output_dir" => self.output_dir = path(v),
            "d_min" => self.d_min = parse_value(key, v)?,
            "d_max" => self.d_max = parse_value(key, v)?,
            "lambda" | "lambda_si" => self.weights.lambda_si = parse_value(key, v)?,
            "beta" => self.weights.beta = parse_value(key, v)?,
            "gamma" => self.weights.gamma = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "train_split" => self.train_split = v.to_string(),
            "coarse_base_channels" => self.coarse_base_channels = parse_value(key, v)?,
            "coarse_levels" => self.coarse_levels = parse_value(key, v)?,
            "confidence_base_channels" => self.confidence_base_channels = parse_value(key, v)?,
            "confidence_levels" => self.confidence_levels = parse_value(key, v)?,
            "feature_channels" => self.feature_channels = parse_value(key, v)?,
            "heads" => self.heads = parse_value(key, v)?,
            "token_downsample" => self.token_downsample = parse_value(key, v)?,
            "use_cmt" => self.ablation.use_cmt = parse_bool(key, v)?,
            "use_cpn" => self.ablation.use_cpn = parse_bool(key, v)?,
            "use_l_coa" => self.ablation.use_l_coa = parse_bool(key, v)?,
            "use_l_con" => self.ablation.use_l_con = parse_bool(key, v)?,
            "literal_eq8_scaling" => self.ablation.literal_eq8_scaling = parse_bool(key, v)?,
            "eval_min_depth" => self.eval_caps.0 = parse_value(key, v)?,
            "eval_max_depth" => self.eval_caps.1 = parse_value(key, v)?,
            _ => return Err(format!("unknown key {key}")),
        }
        Ok(())
    }

    /// Renders the config in the file format; parsing the result with the
    /// same base directory gives back `self`.
    pub fn to_text(&self) -> String {
        let a = &self.ablation;
        let w = &self.weights;
        let rows: Vec<(&str, String)> = vec![
            ("dataset_root", self.dataset_root.display().to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("d_min", self.d_min.to_string()),
            ("d_max", self.d_max.to_string()),
            ("lambda", w.lambda_si.to_string()),
            ("beta", w.beta.to_string()),
            ("gamma", w.gamma.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("train_split", self.train_split.clone()),
            ("coarse_base_channels", self.coarse_base_channels.to_string()),
            ("coarse_levels", self.coarse_levels.to_string()),
            ("confidence_base_channels", self.confidence_base_channels.to_string()),
            ("confidence_levels", self.confidence_levels.to_string()),
            ("feature_channels", self.feature_channels.to_string()),
            ("heads", self.heads.to_string()),
            ("token_downsample", self.token_downsample.to_string()),
            ("use_cmt", a.use_cmt.to_string()),
            ("use_cpn", a.use_cpn.to_string()),
            ("use_l_coa", a.use_l_coa.to_string()),
            ("use_l_con", a.use_l_con.to_string()),
            ("literal_eq8_scaling", a.literal_eq8_scaling.to_string()),
            ("eval_min_depth", self.eval_caps.0.to_string()),
            ("eval_max_depth", self.eval_caps.1.to_string()),
        ];
        rows.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
