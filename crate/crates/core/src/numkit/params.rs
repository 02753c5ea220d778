use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// One learned tensor with its gradient accumulator and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
    m: Tensor2,
    v: Tensor2,
}

impl Param {
    fn new(value: Tensor2) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor2::zeros(r, c),
            m: Tensor2::zeros(r, c),
            v: Tensor2::zeros(r, c),
        }
    }

    pub fn first_moment(&self) -> &Tensor2 {
        &self.m
    }

    pub fn second_moment(&self) -> &Tensor2 {
        &self.v
    }
}

/// Named parameter tensors. Iteration order is the lexicographic name order,
/// which keeps every reduction and serialization deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Panics if `name` is missing; model code only asks for names it created.
    pub fn value(&self, name: &str) -> &Tensor2 {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
            .value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor2 {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
            .value
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Tensor2 {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
            .grad
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.data().len()).sum()
    }

    /// Fresh zeroed gradient buffers shaped like this set.
    pub fn zero_grads(&self) -> Grads {
        Grads {
            map: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), Tensor2::zeros(p.value.rows(), p.value.cols())))
                .collect(),
        }
    }

    /// Adds `scale · grads` into the accumulators.
    pub fn accumulate(&mut self, grads: &Grads, scale: f64) {
        for (name, g) in &grads.map {
            let p = self
                .params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter `{name}`"));
            for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Parameter values only, with optimizer state reset.
    pub fn values_only(&self) -> ParamSet {
        Self {
            params: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), Param::new(p.value.clone())))
                .collect(),
        }
    }

    /// Bitwise equality of parameter values (ignores gradients and moments).
    pub fn values_equal(&self, other: &ParamSet) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Gradient buffers detached from a [`ParamSet`], used for per-example
/// backward passes that are reduced afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    map: BTreeMap<String, Tensor2>,
}

impl Grads {
    pub fn get_mut(&mut self, name: &str) -> &mut Tensor2 {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing gradient `{name}`"))
    }

    pub fn get(&self, name: &str) -> &Tensor2 {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing gradient `{name}`"))
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (k, g) in &other.map {
            self.get_mut(k).add_assign(g);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One bias-corrected adaptive-moment step, `step` counting from 1.
///
/// Moments are updated for every coordinate, but a coordinate whose gradient
/// is exactly zero keeps its value. Embedding rows of tokens absent from a
/// batch therefore stay put, and a zero gradient never moves a parameter.
/// Gradients are cleared afterwards.
pub fn adam_update(params: &mut ParamSet, cfg: &AdamConfig, step: u64) -> Result<()> {
    for (name, p) in params.iter() {
        if !p.grad.is_finite() {
            return Err(Error::Divergence {
                param: name.to_string(),
                context: String::new(),
            });
        }
    }
    let step = step.max(1) as i32;
    let bc1 = 1.0 - cfg.beta1.powi(step);
    let bc2 = 1.0 - cfg.beta2.powi(step);
    for p in params.params.values_mut() {
        let Param { value, grad, m, v } = p;
        for i in 0..value.data().len() {
            let g = grad.data()[i];
            let mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * g;
            let vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            if g != 0.0 {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                value.data_mut()[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        grad.fill(0.0);
    }
    Ok(())
}
