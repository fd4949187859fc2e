use std::collections::HashMap;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of learnable tensors, kept in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, mut tensor: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        tensor.set_requires_grad(true);
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers a tensor drawn from uniform(-scale, scale).
    pub fn uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        scale: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let n = super::tensor::numel(&shape);
        let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        self.insert(name, Tensor::new(shape, data)?)
    }

    pub fn zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.tensors
            .iter()
            .enumerate()
            .map(move |(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Tensor)> {
        self.tensors
            .iter_mut()
            .enumerate()
            .map(|(i, t)| (ParamId(i), t))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Adds tape-produced gradients into each tensor's grad buffer.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (i, g) in grads.grads.iter().enumerate() {
            if let Some(g) = g {
                self.tensors[i].accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Parameter gradients produced by one backward pass, indexed by [`ParamId`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn is_finite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .all(|g| g.iter().all(|x| x.is_finite()))
    }
}
