//! Prediction-error loss and exact reverse-mode gradients through the
//! unrolled prior/posterior dynamics.
//!
//! The backward pass differentiates the same code path the forward rollout
//! takes, including the posterior corrections (each correction is a
//! differentiable function of the parameters, so error terms feed back into
//! every weight). Observations are treated as constants.

use crate::config::{ModelConfig, TopdownSource};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, tanh_vec};
use crate::model::{initial_posteriors, rollout_step, ClassEmbedding, StepRecord};
use crate::params::NetworkParams;

/// Which gradients to accumulate, and whether to treat the posterior
/// corrections as constants (ablation).
#[derive(Debug, Clone, Copy)]
pub struct GradOptions {
    pub wrt_params: bool,
    pub wrt_embedding: bool,
    /// Treat the posterior corrections as constants in the backward pass, so
    /// gradients flow only through the prior dynamics.
    pub stop_posterior_grad: bool,
}

impl Default for GradOptions {
    fn default() -> Self {
        GradOptions {
            wrt_params: true,
            wrt_embedding: false,
            stop_posterior_grad: false,
        }
    }
}

/// Loss value plus whichever gradients were requested.
#[derive(Debug, Clone)]
pub struct SequenceGrad {
    pub loss: f64,
    pub params: Option<NetworkParams>,
    pub embedding: Option<Vec<f64>>,
}

/// L = ½ Σ_t (‖ε_t‖² + Σ_n w_n ‖ε_t^n‖²) over a fully observed sequence.
pub fn prediction_error_loss(records: &[StepRecord], loss_layer_weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for rec in records {
        total += step_loss(rec, loss_layer_weights)?;
    }
    Ok(total)
}

fn step_loss(rec: &StepRecord, loss_layer_weights: &[f64]) -> Result<f64> {
    let eps = rec.sensory_error.as_ref().ok_or_else(|| {
        Error::argument(format!("step {} has no observation", rec.t))
    })?;
    let mut acc: f64 = eps.iter().map(|e| e * e).sum();
    for (state, &w) in rec.states.iter().zip(loss_layer_weights) {
        acc += w * state.layer_error.iter().map(|e| e * e).sum::<f64>();
    }
    Ok(0.5 * acc)
}

/// Teacher-forced rollout: every step observes the corresponding target.
pub fn rollout_teacher_forced(
    params: &NetworkParams,
    config: &ModelConfig,
    embedding: &ClassEmbedding,
    observations: &[Vec<f64>],
) -> Result<Vec<StepRecord>> {
    let mut prev = initial_posteriors(config);
    let mut records = Vec::with_capacity(observations.len());
    for (t, obs) in observations.iter().enumerate() {
        let rec = rollout_step(params, config, embedding, &prev, Some(obs), t)?;
        prev = rec.posteriors();
        records.push(rec);
    }
    Ok(records)
}

/// Forward rollout plus backward pass over one observed sequence.
pub fn sequence_gradients(
    params: &NetworkParams,
    config: &ModelConfig,
    embedding: &ClassEmbedding,
    observations: &[Vec<f64>],
    options: GradOptions,
) -> Result<SequenceGrad> {
    let records = rollout_teacher_forced(params, config, embedding, observations)?;
    backward(params, config, embedding, &records, options)
}

/// Reverse-mode pass over already-computed step records.
///
/// Every intermediate the adjoints need (previous posteriors, priors, layer
/// errors, sensory errors) is recoverable from the records, so the
/// differentiated graph is exactly the one the forward rollout built.
pub fn backward(
    params: &NetworkParams,
    config: &ModelConfig,
    embedding: &ClassEmbedding,
    records: &[StepRecord],
    options: GradOptions,
) -> Result<SequenceGrad> {
    let n_layers = config.num_layers();
    let top = n_layers - 1;
    let loss = prediction_error_loss(records, &config.loss_layer_weights)?;

    let mut grad_params = options.wrt_params.then(|| NetworkParams::zeros(config));
    let mut grad_c = options
        .wrt_embedding
        .then(|| vec![0.0; config.num_classes]);

    // Adjoint of this step's posteriors, accumulated from later steps.
    let mut hq_bar: Vec<Vec<f64>> = config
        .nodes_per_layer
        .iter()
        .map(|&d| vec![0.0; d])
        .collect();
    let zeros_state = initial_posteriors(config);

    for t in (0..records.len()).rev() {
        let rec = &records[t];
        let prev_posteriors: Vec<&[f64]> = if t == 0 {
            zeros_state.iter().map(|v| v.as_slice()).collect()
        } else {
            records[t - 1]
                .states
                .iter()
                .map(|s| s.h_posterior.as_slice())
                .collect()
        };
        let eps = rec
            .sensory_error
            .as_ref()
            .ok_or_else(|| Error::argument(format!("step {} has no observation", rec.t)))?;

        let priors: Vec<&[f64]> = rec.states.iter().map(|s| s.h_prior.as_slice()).collect();
        let corrs: Vec<&[f64]> = rec.states.iter().map(|s| s.layer_error.as_slice()).collect();
        let tanh_priors: Vec<Vec<f64>> = priors.iter().map(|p| tanh_vec(p)).collect();

        // hq = hp - corr, plus the ½w‖corr‖² loss term.
        let mut hp_bar: Vec<Vec<f64>> = hq_bar.clone();
        let mut eps_bar: Vec<f64> = eps.clone();

        if !options.stop_posterior_grad {
            let mut corr_bar: Vec<Vec<f64>> = (0..n_layers)
                .map(|n| {
                    let w = config.loss_layer_weights[n];
                    corrs[n]
                        .iter()
                        .zip(&hq_bar[n])
                        .map(|(&c, &hb)| w * c - hb)
                        .collect()
                })
                .collect();

            // corr[n] = α_n d[n] ⊙ S[n]; S chains upward through the layer
            // errors, so its adjoints are resolved top-down.
            for n in (0..n_layers).rev() {
                let alpha = config.alpha_h[n];
                let lifted = if n == 0 {
                    params.w_o.mat_vec(eps)
                } else {
                    params.w_hh[n - 1].mat_vec(corrs[n - 1])
                };
                let d_gain: Vec<f64> =
                    tanh_priors[n].iter().map(|&th| 1.0 - th * th).collect();
                let s_bar: Vec<f64> = corr_bar[n]
                    .iter()
                    .zip(&d_gain)
                    .map(|(&cb, &d)| alpha * cb * d)
                    .collect();
                for i in 0..d_gain.len() {
                    hp_bar[n][i] +=
                        alpha * corr_bar[n][i] * lifted[i] * (-2.0 * tanh_priors[n][i] * d_gain[i]);
                }
                if n == 0 {
                    if let Some(g) = grad_params.as_mut() {
                        g.w_o.add_outer(&s_bar, eps);
                    }
                    let lift_back = params.w_o.mat_t_vec(&s_bar);
                    for (eb, lb) in eps_bar.iter_mut().zip(&lift_back) {
                        *eb += lb;
                    }
                } else {
                    if let Some(g) = grad_params.as_mut() {
                        g.w_hh[n - 1].add_outer(&s_bar, corrs[n - 1]);
                    }
                    let down = params.w_hh[n - 1].mat_t_vec(&s_bar);
                    for (cb, dv) in corr_bar[n - 1].iter_mut().zip(&down) {
                        *cb += dv;
                    }
                }
            }
        }

        // ε = x - obs; x = w_oᵀ tanh(hp⁰) + b_o.
        let a0 = &tanh_priors[0];
        if let Some(g) = grad_params.as_mut() {
            g.w_o.add_outer(a0, &eps_bar);
            for (gb, &xb) in g.b_o.iter_mut().zip(&eps_bar) {
                *gb += xb;
            }
        }
        let a0_bar = params.w_o.mat_vec(&eps_bar);
        for i in 0..a0.len() {
            hp_bar[0][i] += a0_bar[i] * (1.0 - a0[i] * a0[i]);
        }

        // Priors, ascending so each layer's top-down adjoint reaches the
        // layer above before that layer is decomposed (PriorT schedule).
        let mut hq_prev_bar: Vec<Vec<f64>> = config
            .nodes_per_layer
            .iter()
            .map(|&d| vec![0.0; d])
            .collect();
        for n in 0..n_layers {
            let tau = config.tau_h[n];
            let leak = 1.0 - 1.0 / tau;
            let a_prev = tanh_vec(prev_posteriors[n]);
            let inner_bar: Vec<f64> = hp_bar[n].iter().map(|&h| h / tau).collect();

            for (qb, &hb) in hq_prev_bar[n].iter_mut().zip(&hp_bar[n]) {
                *qb += leak * hb;
            }
            if let Some(g) = grad_params.as_mut() {
                g.w_r[n].add_outer(&inner_bar, &a_prev);
                for (gb, &ib) in g.b_r[n].iter_mut().zip(&inner_bar) {
                    *gb += ib;
                }
            }
            let rec_back = params.w_r[n].mat_t_vec(&inner_bar);
            for i in 0..a_prev.len() {
                hq_prev_bar[n][i] += rec_back[i] * (1.0 - a_prev[i] * a_prev[i]);
            }

            if n == top {
                if let Some(g) = grad_params.as_mut() {
                    g.w_c.add_outer(&embedding.values, &inner_bar);
                }
                if let Some(gc) = grad_c.as_mut() {
                    let up = params.w_c.mat_vec(&inner_bar);
                    for (g, u) in gc.iter_mut().zip(&up) {
                        *g += u;
                    }
                }
            } else {
                let ctx: &[f64] = match config.topdown_source {
                    TopdownSource::PriorT => priors[n + 1],
                    TopdownSource::PosteriorTminus1 => prev_posteriors[n + 1],
                };
                let a_above = tanh_vec(ctx);
                if let Some(g) = grad_params.as_mut() {
                    g.w_hh[n].add_outer(&a_above, &inner_bar);
                }
                let up = params.w_hh[n].mat_vec(&inner_bar);
                match config.topdown_source {
                    TopdownSource::PriorT => {
                        for i in 0..a_above.len() {
                            hp_bar[n + 1][i] += up[i] * (1.0 - a_above[i] * a_above[i]);
                        }
                    }
                    TopdownSource::PosteriorTminus1 => {
                        for i in 0..a_above.len() {
                            hq_prev_bar[n + 1][i] += up[i] * (1.0 - a_above[i] * a_above[i]);
                        }
                    }
                }
            }
        }
        hq_bar = hq_prev_bar;
    }

    if let Some(g) = grad_params.as_ref() {
        if let Some(name) = g.first_non_finite() {
            return Err(Error::numeric(format!("non-finite gradient in {name}")));
        }
    }
    if let Some(gc) = grad_c.as_ref() {
        if !all_finite(gc) {
            return Err(Error::numeric("non-finite gradient in class embedding"));
        }
    }
    Ok(SequenceGrad {
        loss,
        params: grad_params,
        embedding: grad_c,
    })
}
