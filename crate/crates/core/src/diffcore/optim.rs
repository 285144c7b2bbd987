use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::params::ParamStore;
use crate::error::{Error, Result};

/// Step-decay learning rate: `base_lr * decay_factor^(#decay_epochs <= epoch)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f32,
    pub decay_factor: f32,
    #[serde(default)]
    pub decay_epochs: Vec<usize>,
}

impl LrSchedule {
    pub fn new(base_lr: f32, decay_factor: f32, decay_epochs: Vec<usize>) -> Result<Self> {
        let s = Self {
            base_lr,
            decay_factor,
            decay_epochs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(base_lr: f32) -> Self {
        Self {
            base_lr,
            decay_factor: 1.0,
            decay_epochs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0) || !self.base_lr.is_finite() {
            return Err(Error::invalid("base_lr", format!("{} must be finite and >= 0", self.base_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::invalid(
                "decay_factor",
                format!("{} must lie in (0, 1]", self.decay_factor),
            ));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("decay_epochs", "must be sorted"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f32 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.base_lr * self.decay_factor.powi(decays as i32)
    }
}

/// Plain gradient descent: `p <- p - lr(epoch) * grad(p)`, then clears every
/// gradient slot.
pub fn sgd_step(params: &mut ParamStore, schedule: &LrSchedule, epoch: usize) -> Result<()> {
    if let Some((path, _)) = params.iter().find(|(_, p)| p.grad().is_none()) {
        return Err(Error::GradientNotFilled(path.to_string()));
    }
    let lr = schedule.lr_at(epoch);
    for (_, value, grad) in params.iter_mut() {
        let grad = grad.expect("checked above");
        for (p, g) in value.data_mut().iter_mut().zip(grad.data()) {
            *p -= lr * g;
        }
    }
    params.clear_grads();
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        #[serde(default)]
        momentum: f32,
    },
    Adam {
        beta1: f32,
        beta2: f32,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd { momentum: 0.0 }
    }
}

/// Stateful optimizer over one [`ParamStore`]. With zero momentum it reduces
/// to [`sgd_step`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    schedule: LrSchedule,
    first: BTreeMap<String, Vec<f32>>,
    second: BTreeMap<String, Vec<f32>>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, schedule: LrSchedule) -> Self {
        Self {
            kind,
            schedule,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, epoch: usize) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd { momentum } if momentum == 0.0 => sgd_step(params, &self.schedule, epoch),
            OptimizerKind::Sgd { momentum } => {
                let lr = self.schedule.lr_at(epoch);
                for (path, value, grad) in params.iter_mut() {
                    let grad = grad.ok_or_else(|| Error::GradientNotFilled(path.to_string()))?;
                    let vel = self
                        .first
                        .entry(path.to_string())
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    for ((p, g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(vel.iter_mut()) {
                        *v = momentum * *v + g;
                        *p -= lr * *v;
                    }
                }
                params.clear_grads();
                Ok(())
            }
            OptimizerKind::Adam { beta1, beta2 } => {
                const EPS: f32 = 1e-8;
                self.steps += 1;
                let lr = self.schedule.lr_at(epoch);
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for (path, value, grad) in params.iter_mut() {
                    let grad = grad.ok_or_else(|| Error::GradientNotFilled(path.to_string()))?;
                    let m = self.first.entry(path.to_string()).or_insert_with(|| vec![0.0; grad.len()]);
                    let v = self.second.entry(path.to_string()).or_insert_with(|| vec![0.0; grad.len()]);
                    for (i, (p, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        *p -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                    }
                }
                params.clear_grads();
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::tensor::Tensor;

    fn single(p: f32, g: f32) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(p)).unwrap();
        s.set_grad("p", &[g]).unwrap();
        s
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut s = single(1.5, 0.7);
        sgd_step(&mut s, &LrSchedule::constant(0.0), 0).unwrap();
        assert_eq!(s.value("p").unwrap().data(), &[1.5]);
    }

    #[test]
    fn base_lr_two_step() {
        let mut s = single(1.0, 0.5);
        sgd_step(&mut s, &LrSchedule::constant(2.0), 0).unwrap();
        assert_eq!(s.value("p").unwrap().data(), &[0.0]);
        assert!(s.get("p").unwrap().grad().is_none());
    }

    #[test]
    fn step_decay_counts_inclusive_epochs() {
        let s = LrSchedule::new(2.0, 0.2, vec![8, 12]).unwrap();
        assert_eq!(s.lr_at(7), 2.0);
        assert!((s.lr_at(8) - 0.4).abs() < 1e-7);
        assert!((s.lr_at(12) - 0.08).abs() < 1e-7);
    }

    #[test]
    fn unfilled_gradient_is_an_error() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(
            sgd_step(&mut s, &LrSchedule::constant(1.0), 0),
            Err(Error::GradientNotFilled(p)) if p == "a"
        ));
    }

    #[test]
    fn schedule_validation() {
        assert!(LrSchedule::new(1.0, 0.0, vec![]).is_err());
        assert!(LrSchedule::new(1.0, 0.5, vec![3, 1]).is_err());
        assert!(LrSchedule::new(-1.0, 0.5, vec![]).is_err());
    }
}
