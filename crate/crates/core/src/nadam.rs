//! NAdam (Adam with Nesterov momentum and a decaying momentum schedule).
//!
//! With step counter `t` starting at 1 and `psi(t) = beta1 (1 - 0.5 *
//! 0.96^(t * momentum_decay))`:
//!
//! ```text
//! m  <- beta1 m + (1 - beta1) g
//! v  <- beta2 v + (1 - beta2) g^2
//! P_t = prod_{i <= t} psi(i)
//! d  = sqrt(v / (1 - beta2^t)) + eps
//! theta <- theta - lr (1 - psi(t)) / (1 - P_t) * g / d
//!               - lr psi(t+1) / (1 - P_t psi(t+1)) * m / d
//! ```
//!
//! This is the update used by common deep-learning frameworks, with
//! `momentum_decay = 0.004` (so `0.96^(t/250)`).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum_decay: f64,
}

impl Default for NAdamConfig {
    fn default() -> Self {
        NAdamConfig {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum_decay: 4e-3,
        }
    }
}

impl NAdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        NAdamConfig {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NAdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    /// Running product of the momentum schedule.
    pub mu_product: f64,
}

impl NAdamState {
    pub fn new(n: usize) -> Self {
        NAdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            mu_product: 1.0,
        }
    }
}

/// Momentum schedule `psi(t)`.
pub fn momentum_at(cfg: &NAdamConfig, t: u64) -> f64 {
    cfg.beta1 * (1.0 - 0.5 * 0.96_f64.powf(t as f64 * cfg.momentum_decay))
}

/// Applies one NAdam update to `params` in place.
pub fn nadam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut NAdamState,
    cfg: &NAdamConfig,
) -> Result<()> {
    let n = params.len();
    for len in [grads.len(), state.m.len(), state.v.len()] {
        if len != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: len,
            });
        }
    }
    state.t += 1;
    let t = state.t;
    let mu = momentum_at(cfg, t);
    let mu_next = momentum_at(cfg, t + 1);
    state.mu_product *= mu;
    let bias2 = 1.0 - cfg.beta2.powf(t as f64);
    let grad_coef = cfg.lr * (1.0 - mu) / (1.0 - state.mu_product);
    let mom_coef = cfg.lr * mu_next / (1.0 - state.mu_product * mu_next);

    for i in 0..n {
        let g = grads[i];
        state.m[i] += (g - state.m[i]) * (1.0 - cfg.beta1);
        state.v[i] = state.v[i] * cfg.beta2 + (1.0 - cfg.beta2) * g * g;
        let denom = (state.v[i] / bias2).sqrt() + cfg.eps;
        params[i] -= grad_coef * g / denom;
        params[i] -= mom_coef * state.m[i] / denom;
    }
    Ok(())
}
