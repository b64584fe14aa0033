use serde::{Deserialize, Serialize};

use super::store::{BufferKind, ParamStore};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        Self::with_hyper(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.metas().iter().map(|m| vec![0.0; m.len()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.m[index]
    }

    /// Applies one update to every trainable parameter buffer, then zeroes all
    /// gradients. Frozen buffers and their moments are left alone.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        let ids: Vec<_> = store
            .ids()
            .filter(|&id| store.meta(id).kind == BufferKind::Param && store.is_trainable(id))
            .collect();
        for &id in &ids {
            if store.grad(id).iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite gradient in `{}`",
                    store.meta(id).name
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for id in ids {
            let i = id.index();
            let grad = store.grad(id).to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = store.value_mut(id);
            for j in 0..w.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                w[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}

/// Cosine annealing from `lr_max` at `step = 0` to `lr_min` at `step = total`.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    let total = total.max(1);
    let t = step.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}
