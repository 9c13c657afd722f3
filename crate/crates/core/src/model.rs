//! One timestep of network dynamics: top-down prior prediction, output
//! readout, and bottom-up posterior error correction.

use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TopdownSource};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, sub, tanh_vec};
use crate::params::NetworkParams;

/// K-dimensional conditioning vector. One-hot during generation, free-valued
/// while being optimized in inference mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEmbedding {
    pub values: Vec<f64>,
}

impl ClassEmbedding {
    pub fn zeros(k: usize) -> Self {
        ClassEmbedding {
            values: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Class indices sorted by descending value, ties broken by lowest index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| {
            self.values[b]
                .partial_cmp(&self.values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Embedding with 1 at index k and 0 elsewhere.
pub fn one_hot(k: usize, num_classes: usize) -> Result<ClassEmbedding> {
    if k >= num_classes {
        return Err(Error::argument(format!(
            "class index {k} out of range for {num_classes} classes"
        )));
    }
    let mut values = vec![0.0; num_classes];
    values[k] = 1.0;
    Ok(ClassEmbedding { values })
}

/// Prior/posterior hidden-state pair and the layer error at one timestep.
/// `layer_error` is always `h_prior - h_posterior`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub h_prior: Vec<f64>,
    pub h_posterior: Vec<f64>,
    pub layer_error: Vec<f64>,
}

/// Everything the network computed at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub states: Vec<LayerState>,
    pub prediction: Vec<f64>,
    pub observation: Option<Vec<f64>>,
    /// prediction - observation, present only when an observation was given.
    pub sensory_error: Option<Vec<f64>>,
}

impl StepRecord {
    pub fn posteriors(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.h_posterior.clone()).collect()
    }
}

/// Prior update for layer n.
///
/// h_prior = (1 - 1/τ)·h_prev + (1/τ)·(w_r·tanh(h_prev) + class term (top
/// layer) + top-down term (other layers) + b_r). `topdown_context` is the raw
/// (pre-tanh) activity of layer n+1 chosen by the caller's schedule; it must
/// be None exactly for the top layer.
pub fn forward_prior(
    params: &NetworkParams,
    config: &ModelConfig,
    prev_posteriors: &[Vec<f64>],
    topdown_context: Option<&[f64]>,
    embedding: &ClassEmbedding,
    layer: usize,
) -> Result<Vec<f64>> {
    let n = config.num_layers();
    let width = config.nodes_per_layer[layer];
    let top = n - 1;
    let h_prev = &prev_posteriors[layer];
    if h_prev.len() != width {
        return Err(Error::argument(format!(
            "layer {layer} previous state has {} entries, expected {width}",
            h_prev.len()
        )));
    }
    if layer == top && topdown_context.is_some() {
        return Err(Error::argument("top layer takes no top-down context"));
    }
    if layer < top && topdown_context.is_none() {
        return Err(Error::argument(format!(
            "layer {layer} requires top-down context from layer {}",
            layer + 1
        )));
    }
    if embedding.len() != config.num_classes {
        return Err(Error::argument(format!(
            "embedding has {} entries, expected {}",
            embedding.len(),
            config.num_classes
        )));
    }

    let tau = config.tau_h[layer];
    let leak = 1.0 - 1.0 / tau;
    let mut inner = params.w_r[layer].mat_vec(&tanh_vec(h_prev));
    if layer == top {
        let cls = params.w_c.mat_t_vec(&embedding.values);
        for (acc, c) in inner.iter_mut().zip(&cls) {
            *acc += c;
        }
    } else {
        let ctx = topdown_context.unwrap();
        if ctx.len() != config.nodes_per_layer[layer + 1] {
            return Err(Error::argument(format!(
                "top-down context for layer {layer} has {} entries, expected {}",
                ctx.len(),
                config.nodes_per_layer[layer + 1]
            )));
        }
        let td = params.w_hh[layer].mat_t_vec(&tanh_vec(ctx));
        for (acc, t) in inner.iter_mut().zip(&td) {
            *acc += t;
        }
    }
    let h_prior: Vec<f64> = h_prev
        .iter()
        .zip(inner.iter().zip(&params.b_r[layer]))
        .map(|(&hp, (&inn, &b))| leak * hp + (inn + b) / tau)
        .collect();
    if !all_finite(&h_prior) {
        return Err(Error::numeric(format!(
            "non-finite prior at layer {layer}"
        )));
    }
    Ok(h_prior)
}

/// Output readout from the bottom-layer prior: x = w_oᵀ·tanh(h⁰) + b_o.
pub fn output_prediction(params: &NetworkParams, h_prior_bottom: &[f64]) -> Result<Vec<f64>> {
    if h_prior_bottom.len() != params.w_o.rows() {
        return Err(Error::argument(format!(
            "bottom prior has {} entries, expected {}",
            h_prior_bottom.len(),
            params.w_o.rows()
        )));
    }
    let mut x = params.w_o.mat_t_vec(&tanh_vec(h_prior_bottom));
    for (xv, b) in x.iter_mut().zip(&params.b_o) {
        *xv += b;
    }
    Ok(x)
}

/// Top-down sweep over all layers, returning per-layer priors (top to bottom
/// order reversed into bottom-first) and the output prediction.
pub fn prior_pass(
    params: &NetworkParams,
    config: &ModelConfig,
    embedding: &ClassEmbedding,
    prev_posteriors: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = config.num_layers();
    if prev_posteriors.len() != n {
        return Err(Error::argument(format!(
            "{} previous posteriors given for {} layers",
            prev_posteriors.len(),
            n
        )));
    }
    let mut priors: Vec<Vec<f64>> = vec![Vec::new(); n];
    for layer in (0..n).rev() {
        let context: Option<&[f64]> = if layer == n - 1 {
            None
        } else {
            match config.topdown_source {
                TopdownSource::PriorT => Some(&priors[layer + 1]),
                TopdownSource::PosteriorTminus1 => Some(&prev_posteriors[layer + 1]),
            }
        };
        priors[layer] = forward_prior(params, config, prev_posteriors, context, embedding, layer)?;
    }
    let prediction = output_prediction(params, &priors[0])?;
    Ok((priors, prediction))
}

/// Bottom-up posterior correction, Eqs-style: each layer deviates from its
/// prior along the tanh-gain-weighted error signal lifted from below.
///
/// Returns per-layer (posterior, layer_error). The error source for the
/// bottom layer is the sensory error through w_o; above that, the previous
/// layer's just-computed error through w_hh.
pub fn posterior_update(
    params: &NetworkParams,
    config: &ModelConfig,
    priors: &[Vec<f64>],
    sensory_error: &[f64],
) -> Result<Vec<LayerState>> {
    let n = config.num_layers();
    if sensory_error.len() != config.output_dim {
        return Err(Error::argument(format!(
            "sensory error has {} entries, expected {}",
            sensory_error.len(),
            config.output_dim
        )));
    }
    let mut states = Vec::with_capacity(n);
    let mut error_below: Vec<f64> = sensory_error.to_vec();
    for layer in 0..n {
        let lifted = if layer == 0 {
            params.w_o.mat_vec(&error_below)
        } else {
            params.w_hh[layer - 1].mat_vec(&error_below)
        };
        let alpha = config.alpha_h[layer];
        let h_prior = &priors[layer];
        let mut h_posterior = Vec::with_capacity(h_prior.len());
        let mut layer_error = Vec::with_capacity(h_prior.len());
        for (i, &hp) in h_prior.iter().enumerate() {
            let th = hp.tanh();
            let hq = hp - alpha * (1.0 - th * th) * lifted[i];
            h_posterior.push(hq);
            // Stored as the literal prior-minus-posterior difference so the
            // error definition holds bit-exactly.
            layer_error.push(hp - hq);
        }
        if !all_finite(&h_posterior) {
            return Err(Error::numeric(format!(
                "non-finite posterior at layer {layer}"
            )));
        }
        error_below = layer_error.clone();
        states.push(LayerState {
            h_prior: h_prior.clone(),
            h_posterior,
            layer_error,
        });
    }
    Ok(states)
}

/// One full timestep: priors top-down, prediction, then posterior correction
/// if an observation is present (posteriors = priors otherwise).
pub fn rollout_step(
    params: &NetworkParams,
    config: &ModelConfig,
    embedding: &ClassEmbedding,
    prev_posteriors: &[Vec<f64>],
    observation: Option<&[f64]>,
    t: usize,
) -> Result<StepRecord> {
    let (priors, prediction) = prior_pass(params, config, embedding, prev_posteriors)?;
    match observation {
        Some(obs) => {
            if obs.len() != config.output_dim {
                return Err(Error::argument(format!(
                    "observation has {} entries, expected {}",
                    obs.len(),
                    config.output_dim
                )));
            }
            let sensory_error = sub(&prediction, obs);
            let states = posterior_update(params, config, &priors, &sensory_error)?;
            Ok(StepRecord {
                t,
                states,
                prediction,
                observation: Some(obs.to_vec()),
                sensory_error: Some(sensory_error),
            })
        }
        None => {
            let states = priors
                .into_iter()
                .map(|h_prior| LayerState {
                    h_posterior: h_prior.clone(),
                    layer_error: vec![0.0; h_prior.len()],
                    h_prior,
                })
                .collect();
            Ok(StepRecord {
                t,
                states,
                prediction,
                observation: None,
                sensory_error: None,
            })
        }
    }
}

/// All-zero initial hidden state, one vector per layer.
pub fn initial_posteriors(config: &ModelConfig) -> Vec<Vec<f64>> {
    config
        .nodes_per_layer
        .iter()
        .map(|&d| vec![0.0; d])
        .collect()
}
