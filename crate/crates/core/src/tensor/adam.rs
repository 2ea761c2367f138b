use std::collections::BTreeMap;

use super::{Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamSlot<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

/// Adam with bias correction, keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    slots: BTreeMap<String, AdamSlot<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    pub fn slots(&self) -> &BTreeMap<String, AdamSlot<T>> {
        &self.slots
    }

    pub fn insert_slot(&mut self, name: impl Into<String>, slot: AdamSlot<T>) {
        self.slots.insert(name.into(), slot);
    }

    /// Applies one update to every `(name, param, grad)` triple and advances the step counter.
    pub fn step<'a, I>(&mut self, updates: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor<T>, &'a Tensor<T>)>,
    {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let correct1 = T::of(1.0 - c.beta1.powi(t));
        let correct2 = T::of(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));

        for (name, param, grad) in updates {
            if param.shape() != grad.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("`{name}` has shape {:?} but its gradient is {:?}", param.shape(), grad.shape()),
                ));
            }
            let slot = self.slots.entry(name.to_string()).or_insert_with(|| AdamSlot {
                m: Tensor::zeros(param.shape().to_vec()),
                v: Tensor::zeros(param.shape().to_vec()),
            });
            if slot.m.shape() != param.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("state for `{name}` has shape {:?}, parameter is {:?}", slot.m.shape(), param.shape()),
                ));
            }
            let (m, v) = (slot.m.data_mut(), slot.v.data_mut());
            for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
