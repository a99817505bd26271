//! The learnable components: two coarse depth networks, the confidence
//! predictor and the fusion network.

pub mod checkpoint;
mod coarse;
mod confidence;
mod fusion;
mod layers;
mod params;

pub use coarse::{CoarseDepthNet, CoarseDepthNetConfig};
pub use confidence::{ConfidenceNet, ConfidenceNetConfig, ConfidencePair};
pub use fusion::{AttentionOutput, Branch, FusionNet, FusionNetConfig};
pub use params::{BoundParams, NetworkParams};

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub coarse_rgb: CoarseDepthNetConfig,
    pub coarse_thr: CoarseDepthNetConfig,
    pub confidence: ConfidenceNetConfig,
    pub fusion: FusionNetConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            coarse_rgb: CoarseDepthNetConfig::rgb(),
            coarse_thr: CoarseDepthNetConfig::thermal(),
            confidence: ConfidenceNetConfig::default(),
            fusion: FusionNetConfig::default(),
        }
    }
}

/// The four networks of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub coarse_rgb: CoarseDepthNet,
    pub coarse_thr: CoarseDepthNet,
    pub confidence: ConfidenceNet,
    pub fusion: FusionNet,
}

const PREFIXES: [&str; 4] = ["coarse_rgb", "coarse_thr", "confidence", "fusion"];

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        Ok(Model {
            coarse_rgb: CoarseDepthNet::new(cfg.coarse_rgb)?,
            coarse_thr: CoarseDepthNet::new(cfg.coarse_thr)?,
            confidence: ConfidenceNet::new(cfg.confidence)?,
            fusion: FusionNet::new(cfg.fusion)?,
        })
    }

    /// Fresh parameters; each network gets its own seed derived from `seed`.
    pub fn init(&self, seed: u64) -> Result<ModelParams> {
        let sub = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
        Ok(ModelParams {
            coarse_rgb: self.coarse_rgb.init(sub(1))?,
            coarse_thr: self.coarse_thr.init(sub(2))?,
            confidence: self.confidence.init(sub(3))?,
            fusion: self.fusion.init(sub(4))?,
        })
    }
}

/// Independently owned parameter sets of the four networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub coarse_rgb: NetworkParams,
    pub coarse_thr: NetworkParams,
    pub confidence: NetworkParams,
    pub fusion: NetworkParams,
}

impl ModelParams {
    pub fn networks(&self) -> [(&'static str, &NetworkParams); 4] {
        [
            (PREFIXES[0], &self.coarse_rgb),
            (PREFIXES[1], &self.coarse_thr),
            (PREFIXES[2], &self.confidence),
            (PREFIXES[3], &self.fusion),
        ]
    }

    pub fn networks_mut(&mut self) -> [(&'static str, &mut NetworkParams); 4] {
        [
            (PREFIXES[0], &mut self.coarse_rgb),
            (PREFIXES[1], &mut self.coarse_thr),
            (PREFIXES[2], &mut self.confidence),
            (PREFIXES[3], &mut self.fusion),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|(_, p)| p.param_count()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.networks().iter().all(|(_, p)| p.all_finite())
    }

    /// All parameters keyed `"<network>.<name>"`.
    pub fn flatten(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (prefix, net) in self.networks() {
            for (name, t) in net.iter() {
                out.insert(format!("{prefix}.{name}"), t.clone());
            }
        }
        out
    }

    /// Overwrites every parameter from a flat map; names and shapes must
    /// match exactly.
    pub fn load_flat(&mut self, mut flat: BTreeMap<String, Tensor>) -> Result<()> {
        for (prefix, net) in self.networks_mut() {
            let names: Vec<String> = net.iter().map(|(n, _)| n.to_string()).collect();
            for name in names {
                let key = format!("{prefix}.{name}");
                let t = flat
                    .remove(&key)
                    .ok_or_else(|| Error::invalid(format!("checkpoint lacks {key}")))?;
                net.set(&name, t)?;
            }
        }
        if let Some(extra) = flat.keys().next() {
            return Err(Error::invalid(format!(
                "checkpoint has unexpected parameter {extra}"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, self.flatten())
    }

    /// Loads a checkpoint into parameters shaped like `self`.
    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let flat = checkpoint::load(path)?;
        self.load_flat(flat)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}
