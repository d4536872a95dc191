//! Named parameters, their per-step tape bindings, and the optimizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{Mat, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub trainable: bool,
    pub value: Mat,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.params.iter().all(|p| p.name != name), "duplicate parameter {name}");
        self.params.push(Param { name, trainable, value });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.data.len()).sum()
    }

    /// Copies values from `other` by name; shapes must agree.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        let by_name: BTreeMap<&str, &Param> = other.params.iter().map(|p| (p.name.as_str(), p)).collect();
        for p in &mut self.params {
            let src = by_name
                .get(p.name.as_str())
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter {} has shape {:?} in the checkpoint, expected {:?}",
                    p.name,
                    src.value.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

/// Lazily places parameters on a tape, once each.
pub struct Binder<'a> {
    pub store: &'a ParamStore,
    vars: BTreeMap<ParamId, Var>,
    /// Record gradients for trainable parameters.
    pub train: bool,
}

impl<'a> Binder<'a> {
    pub fn new(store: &'a ParamStore, train: bool) -> Self {
        Binder { store, vars: BTreeMap::new(), train }
    }

    pub fn var(&mut self, tape: &mut Tape, id: ParamId) -> Var {
        if let Some(&v) = self.vars.get(&id) {
            return v;
        }
        let p = self.store.get(id);
        let v = tape.leaf(p.value.clone(), self.train && p.trainable);
        self.vars.insert(id, v);
        v
    }

    /// Gradients of every bound trainable parameter.
    pub fn grads(&self, tape: &Tape) -> Vec<(ParamId, Mat)> {
        self.vars
            .iter()
            .filter(|(id, _)| self.store.get(**id).trainable)
            .filter_map(|(&id, &v)| tape.grad(v).map(|g| (id, g.clone())))
            .collect()
    }
}

/// Summed gradients over a batch.
#[derive(Debug, Default)]
pub struct GradAccum {
    grads: BTreeMap<ParamId, Mat>,
}

impl GradAccum {
    pub fn add(&mut self, grads: Vec<(ParamId, Mat)>) {
        for (id, g) in grads {
            match self.grads.get_mut(&id) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    self.grads.insert(id, g);
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.values_mut() {
            g.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(&id)
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.values().flat_map(|g| g.data.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.global_norm();
        if max_norm > 0.0 && n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

/// `lr * (1 - step/total)^power`.
pub fn poly_lr(base: f64, step: usize, total: usize, power: f64) -> f64 {
    if total == 0 {
        return base;
    }
    base * (1.0 - (step as f64 / total as f64).min(1.0)).powf(power)
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<ParamId, Mat>,
    v: BTreeMap<ParamId, Mat>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }
}

impl Adam {
    /// Updates trainable parameters; frozen ones are never touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &GradAccum, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (&id, g) in &grads.grads {
            if !store.get(id).trainable {
                continue;
            }
            let m = self.m.entry(id).or_insert_with(|| Mat::zeros(g.rows, g.cols));
            let v = self.v.entry(id).or_insert_with(|| Mat::zeros(g.rows, g.cols));
            let w = store.value_mut(id);
            for i in 0..g.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                w.data[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
