//! Named parameters, the AdamW optimizer and a reduce-on-plateau schedule.

use serde::{Deserialize, Serialize};

use super::graph::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub frozen: bool,
}

/// Ordered collection of model parameters. The order is part of the
/// checkpoint format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    params: Vec<Parameter>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad: None,
            frozen: false,
        });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, idx: usize) -> &Tensor {
        &self.params[idx].value
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Total number of scalar weights.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for p in &mut self.params {
            p.frozen = frozen;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data.iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.count());
        for p in &self.params {
            let g = p
                .grad
                .as_ref()
                .ok_or_else(|| Error::Graph(format!("no gradient for `{}`", p.name)))?;
            out.extend_from_slice(&g.data);
        }
        Ok(out)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: self.count(),
            });
        }
        let mut at = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Copy gradients from a tape, given the node each parameter was bound to.
    /// A parameter that did not influence the loss gets a zero gradient.
    pub fn load_grads(&mut self, tape: &Tape, nodes: &[NodeId]) -> Result<()> {
        if nodes.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                left: nodes.len(),
                right: self.params.len(),
            });
        }
        for (p, &id) in self.params.iter_mut().zip(nodes) {
            p.grad = Some(match tape.grad(id) {
                Some(g) => g.clone(),
                None => Tensor::zeros(p.value.rows, p.value.cols),
            });
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay: `w ← w(1 − lr·λ)` then the Adam step.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParameterSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Update every non-frozen parameter. Frozen parameters are left
    /// bit-identical even when they carry gradients.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                left: params.len(),
                right: self.m.len(),
            });
        }
        for p in params.iter() {
            if !p.frozen && p.grad.is_none() {
                return Err(Error::Graph(format!("no gradient for `{}`", p.name)));
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.frozen {
                continue;
            }
            let g = p.grad.as_ref().expect("checked above");
            for k in 0..p.value.data.len() {
                let w = &mut p.value.data[k];
                *w *= 1.0 - c.lr * c.weight_decay;
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g.data[k];
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g.data[k] * g.data[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *w -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 5,
            min_lr: 1e-6,
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored value has
/// failed to improve for more than `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub config: PlateauConfig,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(config: PlateauConfig) -> Self {
        Self {
            config,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Record one epoch's metric and return the learning rate to use next.
    pub fn observe(&mut self, metric: f64, lr: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.config.patience {
            self.bad_epochs = 0;
            return (lr * self.config.factor).max(self.config.min_lr);
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_halves_after_patience_exceeded() {
        let mut s = PlateauScheduler::new(PlateauConfig::default());
        let mut lr = 1e-3;
        lr = s.observe(1.0, lr);
        for _ in 0..5 {
            lr = s.observe(1.0, lr);
            assert_eq!(lr, 1e-3);
        }
        lr = s.observe(1.0, lr);
        assert_eq!(lr, 5e-4);
    }

    #[test]
    fn scheduler_respects_floor() {
        let mut s = PlateauScheduler::new(PlateauConfig {
            patience: 0,
            ..Default::default()
        });
        let mut lr = 1.5e-6;
        s.observe(0.0, lr);
        for _ in 0..4 {
            lr = s.observe(0.0, lr);
        }
        assert_eq!(lr, 1e-6);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut ps = ParameterSet::new();
        ps.push("w", Tensor::scalar(1.0));
        let mut opt = AdamW::new(AdamWConfig::default(), &ps);
        assert!(opt.step(&mut ps).is_err());
    }
}
