//! Ordered, named parameter storage with paired gradient and Adam-state
//! buffers.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    /// Running batch-norm statistics live here too but are not learnable.
    pub learnable: bool,
}

#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, learnable: bool) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name '{name}'")));
        }
        let shape = value.shape().to_vec();
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            value,
            learnable,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn param(&self, name: &str) -> Result<&Param<T>> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| Error::invalid(format!("unknown parameter '{name}'")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter '{name}'")))?;
        Ok(&mut self.params[i])
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.param(name)?.value)
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self.param_mut(name)?;
        if p.value.shape() != value.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch for '{name}': {:?} vs {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor<T>) -> Result<()> {
        let p = self.param_mut(name)?;
        p.grad.add_assign(grad).map_err(|_| {
            Error::invalid(format!(
                "gradient shape mismatch for '{name}': {:?} vs {:?}",
                p.grad.shape(),
                grad.shape()
            ))
        })
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Total number of learnable scalar entries.
    pub fn num_learnable_scalars(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.learnable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Name of the first parameter whose value holds a NaN/Inf, if any.
    pub fn first_nonfinite(&self) -> Option<String> {
        self.params
            .iter()
            .find(|p| !p.value.all_finite())
            .map(|p| p.name.clone())
    }

    /// True when every gradient buffer is exactly zero.
    pub fn grads_all_zero(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.grad.data().iter().all(|&v| v == T::zero()))
    }
}
