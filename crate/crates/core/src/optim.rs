//! Named parameter storage and the AdamW update.

use std::collections::HashMap;

use crate::tensor::{mismatch, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    value: Tensor,
    first_moment: Tensor,
    second_moment: Tensor,
}

/// Every trainable tensor of a model, addressable by name, together with the
/// AdamW moment accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
    by_name: HashMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, TensorError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::Invalid {
                op: "param_store",
                detail: format!("duplicate parameter name `{name}`"),
            });
        }
        let id = ParamId(self.slots.len());
        let zeros = Tensor::zeros(value.shape());
        self.slots.push(Slot {
            name: name.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            value,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn moments(&self, id: ParamId) -> (&Tensor, &Tensor) {
        let s = &self.slots[id.0];
        (&s.first_moment, &s.second_moment)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_values(&self) -> usize {
        self.slots.iter().map(|s| s.value.numel()).sum()
    }

    /// Replace a parameter value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<(), TensorError> {
        let slot = &mut self.slots[id.0];
        if slot.value.shape() != value.shape() {
            return Err(mismatch(
                "param_store.set",
                format!("{:?} vs {:?}", slot.value.shape(), value.shape()),
            ));
        }
        slot.value = value;
        Ok(())
    }

    /// Names that hold at least one non-finite value.
    pub fn non_finite(&self) -> Vec<String> {
        self.slots
            .iter()
            .filter(|s| !s.value.is_finite())
            .map(|s| s.name.clone())
            .collect()
    }
}

/// Gradients aligned with a [`ParamStore`]; `None` means "no gradient".
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub fn empty(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// `self[id] += scale * grad`.
    pub fn accumulate(&mut self, id: ParamId, grad: &[f64], shape: &[usize], scale: f64) {
        let slot = &mut self.grads[id.0];
        let t = slot.get_or_insert_with(|| Tensor::zeros(shape));
        for (acc, g) in t.data_mut().iter_mut().zip(grad) {
            *acc += scale * g;
        }
    }

    pub fn merge(&mut self, other: &ParamGrads, scale: f64) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g.data(), g.shape(), scale);
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamW {
    /// One decoupled-weight-decay adaptive-moment update. Parameters without a
    /// gradient are still decayed and their moments still age.
    pub fn step(&self, store: &mut ParamStore, grads: &ParamGrads) -> Result<(), TensorError> {
        if !(self.lr > 0.0) {
            return Err(TensorError::Invalid {
                op: "adamw",
                detail: format!("learning rate must be positive, got {}", self.lr),
            });
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TensorError::Invalid {
                op: "adamw",
                detail: format!("betas must lie in [0, 1), got {} / {}", self.beta1, self.beta2),
            });
        }
        if grads.len() != store.len() {
            return Err(mismatch(
                "adamw",
                format!("{} gradients for {} parameters", grads.len(), store.len()),
            ));
        }
        for (slot, g) in store.slots.iter().zip(&grads.grads) {
            if let Some(g) = g {
                if g.shape() != slot.value.shape() {
                    return Err(mismatch(
                        "adamw",
                        format!("`{}`: {:?} vs {:?}", slot.name, g.shape(), slot.value.shape()),
                    ));
                }
            }
        }

        store.step += 1;
        let t = store.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;

        for (slot, g) in store.slots.iter_mut().zip(&grads.grads) {
            let w = slot.value.data_mut();
            let m = slot.first_moment.data_mut();
            let v = slot.second_moment.data_mut();
            for i in 0..w.len() {
                let gi = g.as_ref().map_or(0.0, |g| g.data()[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                w[i] = w[i] * decay - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![value])).unwrap();
        (store, id)
    }

    #[test]
    fn paper_defaults() {
        let opt = AdamW::default();
        assert_eq!((opt.lr, opt.beta1, opt.beta2), (0.001, 0.5, 0.999));
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let (mut store, id) = single(0.7);
        let mut grads = ParamGrads::empty(&store);
        grads.accumulate(id, &[0.0], &[1], 1.0);
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(store.get(id).data(), &[0.7]);
        assert_eq!(store.step_count(), 1);
    }

    #[test]
    fn one_step_on_square_moves_towards_minimum() {
        // f(w) = w², f'(1) = 2. With bias correction the first step has size lr.
        let (mut store, id) = single(1.0);
        let mut grads = ParamGrads::empty(&store);
        grads.accumulate(id, &[2.0], &[1], 1.0);
        let opt = AdamW {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamW::default()
        };
        opt.step(&mut store, &grads).unwrap();
        let w = store.get(id).data()[0];
        assert!(w.abs() < 1.0);
        assert!((w - 0.9).abs() < 1e-6, "w = {w}");
    }

    #[test]
    fn rejects_non_positive_learning_rate() {
        let (mut store, _) = single(1.0);
        let grads = ParamGrads::empty(&store);
        let opt = AdamW {
            lr: 0.0,
            ..AdamW::default()
        };
        assert!(opt.step(&mut store, &grads).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut store, _) = single(1.0);
        assert!(store.add("w", Tensor::scalar(0.0)).is_err());
    }
}
