use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Named parameter tensors. Iteration order is the lexicographic name order,
/// which fixes the optimizer slot layout and the model-file layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet(BTreeMap<String, Tensor>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.0
            .get(name)
            .ok_or_else(|| Error::Data(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.0
            .get_mut(name)
            .ok_or_else(|| Error::Data(format!("missing parameter `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.0.values_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.0.values().map(Tensor::numel).sum()
    }

    /// Record every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .0
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable)))
            .collect();
        Bound(vars)
    }
}

/// Parameter name → tape variable.
#[derive(Debug, Clone, Default)]
pub struct Bound(BTreeMap<String, Var>);

impl FromIterator<(String, Var)> for Bound {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Bound(iter.into_iter().collect())
    }
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::Data(format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// `{prefix}.w` of shape `[d_in, d_out]` with `N(0, 1/d_in)` entries and a
/// zero `{prefix}.b`.
pub fn init_linear(
    set: &mut ParamSet,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut SplitMix64,
) {
    let std = (1.0 / d_in as f64).sqrt();
    set.insert(
        format!("{prefix}.w"),
        Tensor::randn(&[d_in, d_out], std, rng),
    );
    set.insert(format!("{prefix}.b"), Tensor::zeros(&[d_out]));
}

pub fn init_layer_norm(set: &mut ParamSet, prefix: &str, d: usize) {
    set.insert(format!("{prefix}.gamma"), Tensor::full(&[d], 1.0));
    set.insert(format!("{prefix}.beta"), Tensor::zeros(&[d]));
}

/// `x · w + b` using the `{prefix}.w` / `{prefix}.b` pair.
pub fn linear(tape: &mut Tape, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{prefix}.w"))?;
    let b = p.get(&format!("{prefix}.b"))?;
    let h = tape.matmul(x, w)?;
    tape.add_row(h, b)
}
