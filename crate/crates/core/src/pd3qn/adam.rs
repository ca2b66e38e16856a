//! Bias-corrected Adam and geometric target blending.

use serde::{Deserialize, Serialize};

use super::network::{DuelingParams, NetDims};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: DuelingParams,
    pub second_moment: DuelingParams,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamState {
    pub fn new(dims: NetDims, cfg: AdamConfig) -> Self {
        Self {
            first_moment: DuelingParams::zeros(dims),
            second_moment: DuelingParams::zeros(dims),
            step_count: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }
}

pub fn apply_adam(params: &mut DuelingParams, grads: &DuelingParams, adam: &mut AdamState, lr: f64) -> Result<()> {
    if params.dims() != grads.dims() || params.dims() != adam.first_moment.dims() {
        return Err(Error::Shape {
            expected: params.parameter_count(),
            actual: grads.parameter_count(),
        });
    }
    adam.step_count += 1;
    let t = adam.step_count as i32;
    let (b1, b2, eps) = (adam.beta1, adam.beta2, adam.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(adam.first_moment.tensors_mut())
        .zip(adam.second_moment.tensors_mut());
    for (((w, g), m), v) in tensors {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(online: &DuelingParams, target: &mut DuelingParams, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("soft update factor must lie in (0, 1], got {tau}")));
    }
    if online.dims() != target.dims() {
        return Err(Error::Shape {
            expected: online.parameter_count(),
            actual: target.parameter_count(),
        });
    }
    for (w_t, w) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (a, &b) in w_t.iter_mut().zip(w) {
            *a = tau * b + (1.0 - tau) * *a;
        }
    }
    Ok(())
}
