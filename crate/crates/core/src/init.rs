//! Parameter initialization.

use rand::Rng;

use crate::optim::{ParamId, ParamStore};
use crate::rng;
use crate::tensor::{Tensor, TensorError};

/// Registers freshly initialized parameters in a store.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut rng::Rng,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut rng::Rng) -> Self {
        Self { store, rng }
    }

    /// He-uniform `[fan_in, fan_out]` weight.
    pub fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<ParamId, TensorError> {
        let bound = (6.0 / fan_in as f64).sqrt();
        self.uniform(name, &[fan_in, fan_out], bound)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId, TensorError> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.store.add(name, Tensor::new(shape, data)?)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId, TensorError> {
        self.store.add(name, Tensor::zeros(shape))
    }

    pub fn tensor(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        self.store.add(name, value)
    }

    /// Weight `name.w` plus zero bias `name.b`.
    pub fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<(ParamId, ParamId), TensorError> {
        let w = self.weight(&format!("{name}.w"), fan_in, fan_out)?;
        let b = self.zeros(&format!("{name}.b"), &[fan_out])?;
        Ok((w, b))
    }
}
