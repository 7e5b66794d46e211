use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-slot first and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .slots()
                .iter()
                .map(|s| alloc::vec![0.0; s.value.as_slice().len()])
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            first: zeros(),
            second: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Bias-corrected Adam update of every slot. Gradients are left in place.
    ///
    /// All gradients are checked before anything is written, so a non-finite
    /// gradient leaves both the store and the moments untouched.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if self.first.len() != store.len() {
            return Err(Error::dim(
                "AdamState::step slots",
                self.first.len(),
                store.len(),
            ));
        }
        for slot in store.slots() {
            if !slot.grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of slot `{}`",
                    slot.name
                )));
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        for ((slot, m), v) in store
            .slots_mut()
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let values = slot.value.as_mut_slice();
            let grads = slot.grad.as_slice();
            for (((p, g), m), v) in values
                .iter_mut()
                .zip(grads)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
