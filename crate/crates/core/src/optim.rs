//! Globally norm-clipped Adam over the flattened parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::params::NetworkParams;

/// Optimization hyperparameters. The checkpoint kept from a run is always the
/// one from the epoch with the minimum loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global L2 clip threshold G_max.
    pub grad_clip: f64,
    pub seed: u64,
    /// Ablation switch: stop gradients at the posterior corrections.
    #[serde(default)]
    pub stop_posterior_grad: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10_000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-6,
            grad_clip: 1.0,
            seed: 0,
            stop_posterior_grad: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::argument("beta1 and beta2 must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::argument("learning_rate must be positive"));
        }
        if !(self.grad_clip > 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::argument("grad_clip must be positive"));
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return Err(Error::argument("adam_eps must be positive"));
        }
        Ok(())
    }
}

/// First/second moment accumulators over the flattened gradient layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
        }
    }
}

/// ĝ = g · min(1, G_max / (‖g‖₂ + ε)). Returns the pre-clip norm.
pub fn clip_gradient(grad: &mut [f64], g_max: f64, eps: f64) -> f64 {
    let norm = norm2(grad);
    let factor = (g_max / (norm + eps)).min(1.0);
    if factor < 1.0 {
        for g in grad.iter_mut() {
            *g *= factor;
        }
    }
    norm
}

/// One clipped Adam step over flattened parameters.
pub fn adam_step_flat(
    theta: &mut [f64],
    opt: &mut OptimizerState,
    grad: &[f64],
    cfg: &TrainConfig,
) -> Result<()> {
    if theta.len() != grad.len() || opt.m.len() != grad.len() {
        return Err(Error::argument(format!(
            "parameter/gradient/moment length mismatch ({}, {}, {})",
            theta.len(),
            grad.len(),
            opt.m.len()
        )));
    }
    let mut g = grad.to_vec();
    clip_gradient(&mut g, cfg.grad_clip, cfg.adam_eps);
    opt.step_count += 1;
    let t = opt.step_count as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..g.len() {
        opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g[i];
        opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = opt.m[i] / bias1;
        let v_hat = opt.v[i] / bias2;
        theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Clip-then-Adam applied to structured parameters via the flat layout.
pub fn clip_and_adam_step(
    params: &mut NetworkParams,
    opt: &mut OptimizerState,
    grad: &NetworkParams,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut theta = params.flatten();
    let g = grad.flatten();
    adam_step_flat(&mut theta, opt, &g, cfg)?;
    params.unflatten_from(&theta)
}
