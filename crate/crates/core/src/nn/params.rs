use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Named learnable tensors of one network, ordered by name.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    seed: u64,
    tensors: BTreeMap<String, Tensor>,
}

impl NetworkParams {
    pub fn new(seed: u64) -> Self {
        NetworkParams {
            seed,
            tensors: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if !value.is_finite() {
            return Err(Error::invalid(format!("parameter {name} is not finite")));
        }
        if self.tensors.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Replaces the value of an existing parameter; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter {name}: {:?} -> {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Registers every parameter on `tape` as a grad-tracking leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        self.bind_with(tape, true)
    }

    /// Registers every parameter as a constant (inference).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        self.bind_with(tape, false)
    }

    fn bind_with<'t>(&self, tape: &'t Tape, requires_grad: bool) -> BoundParams<'t> {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), requires_grad)))
                .collect(),
        }
    }
}

/// Parameters of one network registered on a tape.
pub struct BoundParams<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    /// Gradients after `backward`, by parameter name.
    pub fn grads(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .filter_map(|(k, v)| v.grad().map(|g| (k.clone(), g)))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t>)> + '_ {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Seeded parameter initializer: fan-in-scaled uniform weights, zero biases.
pub(crate) struct Initializer {
    rng: ChaCha8Rng,
    params: NetworkParams,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: NetworkParams::new(seed),
        }
    }

    fn uniform(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor {
        let bound = (6.0 / fan_in as f64).sqrt();
        let rng = &mut self.rng;
        Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
    }

    pub fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) -> Result<()> {
        let w = self.uniform(vec![c_out, c_in, k, k], c_in * k * k);
        self.params.insert(format!("{name}.weight"), w)?;
        self.params
            .insert(format!("{name}.bias"), Tensor::zeros(vec![c_out]))
    }

    pub fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Result<()> {
        let w = self.uniform(vec![d_in, d_out], d_in);
        self.params.insert(name.to_string(), w)
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> Result<()> {
        self.params
            .insert(format!("{name}.gamma"), Tensor::ones(vec![channels, 1, 1]))?;
        self.params
            .insert(format!("{name}.beta"), Tensor::zeros(vec![channels, 1, 1]))
    }

    pub fn finish(self) -> NetworkParams {
        self.params
    }
}
