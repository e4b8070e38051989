use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::graph::Gradients;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Index of a [`Variable`] inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named learnable tensor with its gradient slot.
#[derive(Debug, Clone)]
pub struct Variable<T> {
    name: String,
    value: Tensor<T>,
    grad: Tensor<T>,
}

impl<T: Real> Variable<T> {
    /// Hierarchical path such as `s3/u2/enc1/res0/conv1`.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn grad(&self) -> &Tensor<T> {
        &self.grad
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

/// Owner of every [`Variable`] of a model.
///
/// Layers hold [`ParamId`]s; two layers holding the same id share weights.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    vars: Vec<Variable<T>>,
    by_name: BTreeMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            vars: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    /// Registers a new variable; names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate variable name `{name}`")));
        }
        let id = ParamId(self.vars.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.vars.push(Variable { name, value, grad });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Variable<T> {
        &self.vars[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.vars[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.vars[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.vars[id.0].grad
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.vars.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Variable<T>)> {
        self.vars.iter().enumerate().map(|(i, v)| (ParamId(i), v))
    }

    /// Total number of learnable scalars.
    pub fn numel(&self) -> usize {
        self.vars.iter().map(Variable::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        for v in &mut self.vars {
            v.grad.fill(T::zero());
        }
    }

    /// Adds a backward pass's gradients into the gradient slots.
    pub fn accumulate(&mut self, grads: &Gradients<T>) -> Result<()> {
        for (id, g) in grads.params() {
            self.vars[id.0].grad.add_assign(g)?;
        }
        Ok(())
    }

    /// Replaces the gradient slots with a backward pass's gradients.
    pub fn set_grads(&mut self, grads: &Gradients<T>) -> Result<()> {
        self.zero_grad();
        self.accumulate(grads)
    }

    /// Splits into disjoint (value, grad) borrows for optimizers.
    pub(crate) fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Tensor<T>, &Tensor<T>)> {
        self.vars.iter_mut().map(|v| (&mut v.value, &v.grad))
    }

    /// Converts every value to another precision; gradients are reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            vars: self
                .vars
                .iter()
                .map(|v| Variable {
                    name: v.name.clone(),
                    value: v.value.cast(),
                    grad: Tensor::zeros(v.value.shape()),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}
