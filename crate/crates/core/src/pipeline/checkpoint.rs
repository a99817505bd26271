//! Model checkpoints: the network parameters plus `meta.*` scalars recording
//! the architecture and the active pipeline stages, so a checkpoint is
//! usable without its training config.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{checkpoint, Model, ModelConfig, ModelParams};
use crate::tensor::Tensor;

use super::config::Config;

const META_VERSION: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model_cfg: ModelConfig,
    pub use_cmt: bool,
    pub use_cpn: bool,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn fresh(cfg: &Config) -> Result<Self> {
        let model_cfg = cfg.model_config();
        let params = Model::new(&model_cfg)?.init(cfg.seed)?;
        Ok(Checkpoint {
            model_cfg,
            use_cmt: cfg.ablation.use_cmt,
            use_cpn: cfg.ablation.use_cpn,
            params,
        })
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(&self.model_cfg)
    }

    fn meta(&self) -> Vec<(&'static str, f64)> {
        let m = &self.model_cfg;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        vec![
            ("version", META_VERSION),
            ("d_min", m.coarse_rgb.d_min),
            ("d_max", m.coarse_rgb.d_max),
            ("coarse_base_channels", m.coarse_rgb.base_channels as f64),
            ("coarse_levels", m.coarse_rgb.levels as f64),
            ("confidence_base_channels", m.confidence.base_channels as f64),
            ("confidence_levels", m.confidence.levels as f64),
            ("confidence_depth_scale", m.confidence.depth_scale),
            ("feature_channels", m.fusion.feature_channels as f64),
            ("heads", m.fusion.heads as f64),
            ("token_downsample", m.fusion.token_downsample as f64),
            ("scaled_logits", flag(m.fusion.scaled_logits)),
            ("use_cmt", flag(self.use_cmt)),
            ("use_cpn", flag(self.use_cpn)),
        ]
    }

    pub fn to_flat(&self) -> BTreeMap<String, Tensor> {
        let mut flat = self.params.flatten();
        for (k, v) in self.meta() {
            flat.insert(format!("meta.{k}"), Tensor::full(vec![1], v));
        }
        flat
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, self.to_flat())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut flat = checkpoint::load(path)?;
        let bad = |msg: String| Error::format(path, msg);
        let mut take = |k: &str| -> Result<f64> {
            let t = flat
                .remove(&format!("meta.{k}"))
                .ok_or_else(|| bad(format!("missing meta.{k}")))?;
            match t.data() {
                [v] if v.is_finite() => Ok(*v),
                _ => Err(bad(format!("meta.{k} must be one finite value"))),
            }
        };
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v < 1e6 {
                Ok(v as usize)
            } else {
                Err(bad(format!("expected a positive integer, got {v}")))
            }
        };
        if take("version")? != META_VERSION {
            return Err(bad("unsupported checkpoint version".into()));
        }
        let mut cfg = Config {
            d_min: take("d_min")?,
            d_max: take("d_max")?,
            coarse_base_channels: count(take("coarse_base_channels")?)?,
            coarse_levels: count(take("coarse_levels")?)?,
            confidence_base_channels: count(take("confidence_base_channels")?)?,
            confidence_levels: count(take("confidence_levels")?)?,
            feature_channels: count(take("feature_channels")?)?,
            heads: count(take("heads")?)?,
            token_downsample: count(take("token_downsample")?)?,
            ..Config::default()
        };
        let depth_scale = take("confidence_depth_scale")?;
        cfg.ablation.literal_eq8_scaling = take("scaled_logits")? == 0.0;
        cfg.ablation.use_cmt = take("use_cmt")? != 0.0;
        cfg.ablation.use_cpn = take("use_cpn")? != 0.0;
        let mut model_cfg = cfg.model_config();
        model_cfg.confidence.depth_scale = depth_scale;
        let mut params = Model::new(&model_cfg)
            .map_err(|e| bad(e.to_string()))?
            .init(0)?;
        params
            .load_flat(flat)
            .map_err(|e| bad(e.to_string()))?;
        if !params.all_finite() {
            return Err(bad("non-finite parameter values".into()));
        }
        Ok(Checkpoint {
            model_cfg,
            use_cmt: cfg.ablation.use_cmt,
            use_cpn: cfg.ablation.use_cpn,
            params,
        })
    }
}
