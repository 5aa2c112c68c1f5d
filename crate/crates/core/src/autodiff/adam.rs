use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam hyperparameters plus the step-decay learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    /// Multiplicative decay applied every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            decay: 0.98,
            decay_every: 2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// `base_lr · decay^⌊epoch / decay_every⌋`
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base_lr * self.decay.powi((epoch / self.decay_every.max(1)) as i32)
    }
}

/// Optimizer moments for every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Per-tensor multiplier on the scheduled learning rate.
    pub lr_scale: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let sizes = store.sizes();
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            lr_scale: vec![1.0; sizes.len()],
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.config.lr_at(epoch)
    }

    /// One bias-corrected Adam update at the scheduled rate for `epoch`.
    /// Non-finite gradients abort before any parameter is touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>], epoch: usize) -> Result<()> {
        if grads.len() != store.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam: {} gradients for {} parameters ({} moments)",
                grads.len(),
                store.len(),
                self.m.len()
            )));
        }
        for (i, (g, t)) in grads.iter().zip(store.tensors()).enumerate() {
            if g.len() != t.numel() {
                return Err(Error::Dimension(format!(
                    "adam: gradient {i} has {} values for {}",
                    g.len(),
                    t.numel()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite gradient for parameter {i}"),
                });
            }
        }

        self.step += 1;
        let c = self.config;
        let lr = c.lr_at(epoch);
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((t, g), (m, v)), scale) in store
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .zip(&self.lr_scale)
        {
            let lr = lr * scale;
            for (((p, &gv), mv), vv) in t.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *p -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    #[test]
    fn schedule_decays_every_two_epochs() {
        let c = AdamConfig::default();
        assert_eq!(c.lr_at(0), 1e-4);
        assert_eq!(c.lr_at(1), 1e-4);
        assert!((c.lr_at(4) - 9.604e-5).abs() < 1e-18);
        assert!((c.lr_at(5) - 9.604e-5).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::vector(vec![1.0, -2.0]));
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        adam.step(&mut store, &[vec![0.0, 0.0]], 0).unwrap();
        assert_eq!(store.tensors()[0].data(), &[1.0, -2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn one_step_on_square_descends() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(1.0));
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, true);
        let w = b.var(id);
        let l = tape.mul(w, w).unwrap();
        let mut g = tape.backward(l).unwrap();
        adam.step(&mut store, &b.collect(&mut g), 0).unwrap();
        assert!(store.get(id).item().abs() < 1.0);
    }

    #[test]
    fn nan_gradient_is_training_error() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0));
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        let err = adam.step(&mut store, &[vec![f64::NAN]], 7).unwrap_err();
        assert!(matches!(err, Error::Training { epoch: 7, .. }));
        assert_eq!(store.tensors()[0].item(), 1.0);
    }
}
