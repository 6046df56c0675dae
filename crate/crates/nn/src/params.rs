use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tape::{Gradients, Tape, Var};
use crate::{NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    m: Tensor,
    v: Tensor,
}

/// Named trainable tensors with Adam moment estimates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: BTreeMap<String, Parameter>,
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Tape handles for every parameter of a store, valid for one tape.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var, NnError> {
        self.vars.get(name).copied().ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, v: Var) {
        self.vars.insert(name.into(), v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), NnError> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(NnError::DuplicateParameter(name));
        }
        let zeros = Tensor::zeros(value.shape());
        self.params.insert(name, Parameter { value, grad: None, m: zeros.clone(), v: zeros });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor, NnError> {
        self.params.get(name).map(|p| &p.value).ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    /// Replace a parameter's value keeping its shape.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<(), NnError> {
        let p = self.params.get_mut(name).ok_or_else(|| NnError::UnknownParameter(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(NnError::shape("set_value", format!("{name}: {:?} vs {:?}", p.value.shape(), value.shape())));
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Put every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let mut b = Bound::default();
        for (name, p) in &self.params {
            b.insert(name.clone(), tape.leaf(p.value.clone()));
        }
        b
    }

    /// Store gradients from a backward pass; parameters that did not take
    /// part in the graph get zero gradients.
    pub fn set_grads(&mut self, bound: &Bound, grads: &mut Gradients) {
        for (name, p) in self.params.iter_mut() {
            let g = bound.vars.get(name).and_then(|v| grads.take(*v));
            p.grad = Some(g.unwrap_or_else(|| Tensor::zeros(p.value.shape())));
        }
    }

    pub fn set_grad(&mut self, name: &str, g: Tensor) -> Result<(), NnError> {
        let p = self.params.get_mut(name).ok_or_else(|| NnError::UnknownParameter(name.to_string()))?;
        if g.shape() != p.value.shape() {
            return Err(NnError::shape("set_grad", format!("{name}: {:?} vs {:?}", p.value.shape(), g.shape())));
        }
        p.grad = Some(g);
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.params.values_mut().for_each(|p| p.grad = None);
    }

    /// One bias-corrected Adam update. Gradients are consumed.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), NnError> {
        if let Some((name, _)) = self.params.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(NnError::MissingGradient(name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for p in self.params.values_mut() {
            let g = p.grad.take().expect("checked above");
            let (m, v) = (p.m.data_mut(), p.v.data_mut());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let gi = g.data()[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                *w -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
