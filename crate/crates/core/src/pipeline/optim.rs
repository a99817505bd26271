//! Adam with bias-corrected first and second moment estimates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from gradients keyed like [`ModelParams::flatten`].
    /// Parameters without a gradient keep their value and moments.
    pub fn step(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (prefix, net) in params.networks_mut() {
            let names: Vec<String> = net.iter().map(|(n, _)| n.to_string()).collect();
            for name in names {
                let key = format!("{prefix}.{name}");
                let Some(g) = grads.get(&key) else { continue };
                let p = net.get(&name).expect("listed above");
                if g.shape() != p.shape() {
                    return Err(Error::shape(format!("gradient shape mismatch for {key}")));
                }
                let n = g.numel();
                let m = self.m.entry(key.clone()).or_insert_with(|| vec![0.0; n]);
                let v = self.v.entry(key).or_insert_with(|| vec![0.0; n]);
                let mut data = p.data().to_vec();
                for i in 0..n {
                    let gi = g.data()[i];
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                    data[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                }
                net.set(&name, Tensor::new(p.shape().to_vec(), data)?)?;
            }
        }
        Ok(())
    }
}
