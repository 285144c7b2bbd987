use std::collections::BTreeMap;

use crate::diffcore::tensor::{Fnv, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    value: Tensor,
    grad: Tensor,
    grad_filled: bool,
}

impl Param {
    fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            grad_filled: false,
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad_filled.then_some(&self.grad)
    }
}

/// Named trainable parameters, each with a gradient slot of the same shape.
///
/// Paths are kept in sorted order so iteration, checkpoints and optimizer
/// state line up across runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor) -> Result<()> {
        let path = path.into();
        if self.params.contains_key(&path) {
            return Err(Error::DuplicateParam(path));
        }
        self.params.insert(path, Param::new(value));
        Ok(())
    }

    pub fn contains(&self, path: &str) -> bool {
        self.params.contains_key(path)
    }

    pub fn get(&self, path: &str) -> Result<&Param> {
        self.params
            .get(path)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn value(&self, path: &str) -> Result<&Tensor> {
        self.get(path).map(Param::value)
    }

    /// Replaces a parameter's value. The gradient slot is reset to match the
    /// new shape.
    pub fn replace(&mut self, path: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(path)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))?;
        *p = Param::new(value);
        Ok(())
    }

    pub fn value_mut(&mut self, path: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(path)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn set_grad(&mut self, path: &str, grad: &[f32]) -> Result<()> {
        let p = self
            .params
            .get_mut(path)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))?;
        if grad.len() != p.grad.len() {
            return Err(Error::ShapeMismatch {
                layer: path.to_string(),
                expected: p.value.shape().to_vec(),
                got: vec![grad.len()],
            });
        }
        p.grad.data_mut().copy_from_slice(grad);
        p.grad_filled = true;
        Ok(())
    }

    /// Fills every unfilled gradient slot with zeros.
    pub fn fill_missing_grads(&mut self) {
        for p in self.params.values_mut() {
            if !p.grad_filled {
                p.grad.data_mut().fill(0.0);
                p.grad_filled = true;
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().fill(0.0);
            p.grad_filled = false;
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor, Option<&Tensor>)> {
        self.params.iter_mut().map(|(k, p)| {
            let grad = p.grad_filled.then_some(&p.grad);
            (k.as_str(), &mut p.value, grad)
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Digest over all paths and parameter bits.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv::default();
        for (path, p) in &self.params {
            h.write(path.as_bytes());
            h.write(&p.value.checksum().to_le_bytes());
        }
        h.0
    }
}
