//! Inference phase: online estimation of the class embedding from an
//! observed trajectory, by gradient descent on the accumulated past
//! prediction error, with the final reconstruction MSE as a confidence
//! signal.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::grad::{rollout_teacher_forced, sequence_gradients, GradOptions};
use crate::linalg::norm2;
use crate::model::{initial_posteriors, rollout_step, ClassEmbedding};
use crate::report::{RunReport, StepStats};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Embedding learning rate α_c.
    pub alpha_c: f64,
    /// Past-reconstruction iterations per timestep.
    pub n_iter: usize,
    /// Std of the Gaussian embedding initialization.
    pub init_sigma: f64,
    pub seed: u64,
    /// When false, replays run prior-only (no posterior corrections),
    /// implemented as a zero-alpha replay config.
    #[serde(default = "default_true")]
    pub replay_posterior_corrections: bool,
}

fn default_true() -> bool {
    true
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            alpha_c: 2.5e-2,
            n_iter: 15,
            init_sigma: 0.1,
            seed: 0,
            replay_posterior_corrections: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_c >= 0.0 && self.alpha_c.is_finite()) {
            return Err(Error::argument("alpha_c must be finite and >= 0"));
        }
        if self.n_iter == 0 {
            return Err(Error::argument("n_iter must be >= 1"));
        }
        if !(self.init_sigma >= 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::argument("init_sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Output of one timestep's worth of past-reconstruction iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct PastReconstruction {
    pub embedding: ClassEmbedding,
    /// Mean per-step, per-dimension squared reconstruction error of the final
    /// replay with the updated embedding.
    pub l_past: f64,
    /// Posterior states at the end of that final replay; these become the
    /// live states for the next prediction.
    pub live_posteriors: Vec<Vec<f64>>,
}

fn replay_config(checkpoint: &Checkpoint, cfg: &InferenceConfig) -> crate::config::ModelConfig {
    let mut config = checkpoint.config.clone();
    if !cfg.replay_posterior_corrections {
        config.alpha_h = vec![0.0; config.num_layers()];
    }
    config
}

fn reconstruction_mse(records: &[crate::model::StepRecord], dim: usize) -> f64 {
    let total: f64 = records
        .iter()
        .map(|r| {
            r.sensory_error
                .as_ref()
                .map(|e| e.iter().map(|v| v * v).sum::<f64>())
                .unwrap_or(0.0)
        })
        .sum();
    total / (records.len() as f64 * dim as f64)
}

/// Refine the embedding against the observed prefix x̃_{0..=t} (t >= 1).
///
/// Each of the n_iter iterations replays the whole prefix from the zero
/// initial state with the current embedding (weights frozen), takes the
/// gradient of the accumulated prediction-error loss with respect to the
/// embedding alone, and steps C <- C - α_c · (1/t) · Σ_τ ∇_C L(τ). A final
/// measurement replay with the updated embedding yields the reconstruction
/// MSE and the live states.
pub fn past_reconstruction_update(
    checkpoint: &Checkpoint,
    embedding: &ClassEmbedding,
    observations: &[Vec<f64>],
    cfg: &InferenceConfig,
) -> Result<PastReconstruction> {
    cfg.validate()?;
    if observations.len() < 2 {
        return Err(Error::argument(
            "past reconstruction needs at least two observed steps",
        ));
    }
    let config = replay_config(checkpoint, cfg);
    let params = &checkpoint.params;
    let t = observations.len() - 1;
    let mut current = embedding.clone();
    for _ in 0..cfg.n_iter {
        let out = sequence_gradients(
            params,
            &config,
            &current,
            observations,
            GradOptions {
                wrt_params: false,
                wrt_embedding: true,
                stop_posterior_grad: false,
            },
        )?;
        let grad = out.embedding.expect("embedding gradient requested");
        for (c, g) in current.values.iter_mut().zip(&grad) {
            *c -= cfg.alpha_c * g / t as f64;
        }
    }
    let records = rollout_teacher_forced(params, &config, &current, observations)?;
    let l_past = reconstruction_mse(&records, config.output_dim);
    let live_posteriors = records
        .last()
        .expect("non-empty replay")
        .posteriors();
    Ok(PastReconstruction {
        embedding: current,
        l_past,
        live_posteriors,
    })
}

/// Full inference trace over an observation stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    /// Embedding after each timestep's updates.
    pub c_history: Vec<Vec<f64>>,
    /// Reconstruction MSE after each timestep's updates.
    pub l_past_history: Vec<f64>,
    /// Classes by descending final embedding value (ties: lowest index).
    pub ranking: Vec<usize>,
    pub final_l_past: f64,
    /// Live one-step-ahead predictions made before each observation arrived.
    pub predictions: Vec<Vec<f64>>,
    pub sensory_err_norms: Vec<f64>,
    pub layer_err_norms: Vec<Vec<f64>>,
}

impl InferenceTrace {
    pub fn top1(&self) -> usize {
        self.ranking[0]
    }

    pub fn top2(&self) -> Option<usize> {
        self.ranking.get(1).copied()
    }

    pub fn to_report(&self, trial_id: String, class_true: Option<usize>) -> RunReport {
        RunReport {
            trial_id,
            class_true,
            class_top1: Some(self.top1()),
            class_top2: self.top2(),
            final_mse: Some(self.final_l_past),
            trajectory: self.predictions.clone(),
            per_step: self
                .sensory_err_norms
                .iter()
                .zip(&self.layer_err_norms)
                .enumerate()
                .map(|(t, (&sensory, layers))| StepStats {
                    t,
                    sensory_err_norm: sensory,
                    layer_err_norms: layers.clone(),
                })
                .collect(),
            c_history: self.c_history.clone(),
        }
    }
}

/// Observe a stream with frozen weights: each timestep makes a live
/// prediction, ingests the observation through a posterior update, then runs
/// the past-reconstruction iterations; the final replay's state carries over
/// as the live state. The embedding starts as N(0, init_sigma²) noise.
pub fn infer_class(
    checkpoint: &Checkpoint,
    observations: &[Vec<f64>],
    cfg: &InferenceConfig,
) -> Result<InferenceTrace> {
    cfg.validate()?;
    let config = &checkpoint.config;
    let params = &checkpoint.params;
    if observations.is_empty() {
        return Err(Error::argument("observation stream is empty"));
    }
    if observations.iter().any(|o| o.len() != config.output_dim) {
        return Err(Error::argument(format!(
            "observations must have D={} entries",
            config.output_dim
        )));
    }

    let mut rng = Rng::new(cfg.seed);
    let mut embedding = ClassEmbedding {
        values: (0..config.num_classes)
            .map(|_| rng.normal_scaled(cfg.init_sigma))
            .collect(),
    };

    let mut live = initial_posteriors(config);
    let mut trace = InferenceTrace {
        c_history: Vec::with_capacity(observations.len()),
        l_past_history: Vec::with_capacity(observations.len()),
        ranking: Vec::new(),
        final_l_past: 0.0,
        predictions: Vec::with_capacity(observations.len()),
        sensory_err_norms: Vec::with_capacity(observations.len()),
        layer_err_norms: Vec::with_capacity(observations.len()),
    };

    for (t, obs) in observations.iter().enumerate() {
        let step = rollout_step(params, config, &embedding, &live, Some(obs), t)?;
        trace.predictions.push(step.prediction.clone());
        let sensory = step.sensory_error.as_ref().expect("observed step");
        trace.sensory_err_norms.push(norm2(sensory));
        trace
            .layer_err_norms
            .push(step.states.iter().map(|s| norm2(&s.layer_error)).collect());
        live = step.posteriors();

        let l_past = if t >= 1 {
            let out =
                past_reconstruction_update(checkpoint, &embedding, &observations[..=t], cfg)?;
            embedding = out.embedding;
            live = out.live_posteriors;
            out.l_past
        } else {
            sensory.iter().map(|v| v * v).sum::<f64>() / config.output_dim as f64
        };
        trace.c_history.push(embedding.values.clone());
        trace.l_past_history.push(l_past);
    }

    trace.final_l_past = *trace.l_past_history.last().expect("non-empty stream");
    trace.ranking = embedding.ranking();
    Ok(trace)
}
