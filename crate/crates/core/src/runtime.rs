//! Generative phase: closed-loop rollout against a simulated plant, with an
//! optional observation perturbation window.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::model::{initial_posteriors, one_hot, posterior_update, prior_pass};
use crate::report::{RunReport, StepStats};
use crate::rng::Rng;

/// How the simulated plant turns a prediction into an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlantMode {
    /// Observation equals the prediction exactly.
    #[default]
    Ideal,
    /// Prediction plus i.i.d. Gaussian noise of std `sigma`.
    Noisy,
    /// First-order lag toward the prediction with coefficient `lambda`.
    Lagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub mode: PlantMode,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            mode: PlantMode::Ideal,
            sigma: 0.0,
            lambda: 1.0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::argument("plant sigma must be finite and >= 0"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::argument("plant lambda must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Additive offset applied to the observation on steps
/// start_step..=end_step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    pub start_step: usize,
    pub end_step: usize,
    pub offset: Vec<f64>,
}

impl PerturbationSchedule {
    pub fn validate(&self, timesteps: usize, dim: usize) -> Result<()> {
        if self.start_step > self.end_step || self.end_step >= timesteps {
            return Err(Error::argument(format!(
                "perturbation window [{}, {}] must satisfy 0 <= start <= end < {timesteps}",
                self.start_step, self.end_step
            )));
        }
        if self.offset.len() != dim {
            return Err(Error::argument(format!(
                "perturbation offset has {} dims, expected {dim}",
                self.offset.len()
            )));
        }
        if self.offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("perturbation offset must be finite"));
        }
        Ok(())
    }

    pub fn active_at(&self, t: usize) -> bool {
        t >= self.start_step && t <= self.end_step
    }
}

struct Plant {
    config: PlantConfig,
    rng: Rng,
    state: Option<Vec<f64>>,
}

impl Plant {
    fn new(config: PlantConfig, seed: u64) -> Self {
        Plant {
            config,
            rng: Rng::new(seed),
            state: None,
        }
    }

    fn observe(&mut self, prediction: &[f64]) -> Vec<f64> {
        match self.config.mode {
            PlantMode::Ideal => prediction.to_vec(),
            PlantMode::Noisy => prediction
                .iter()
                .map(|&p| p + self.rng.normal_scaled(self.config.sigma))
                .collect(),
            PlantMode::Lagged => {
                let next = match self.state.take() {
                    None => prediction.to_vec(),
                    Some(prev) => prev
                        .iter()
                        .zip(prediction)
                        .map(|(&s, &p)| s + self.config.lambda * (p - s))
                        .collect(),
                };
                self.state = Some(next.clone());
                next
            }
        }
    }
}

/// Closed-loop generation of class k for `timesteps` steps: predict, let the
/// plant act (plus any scheduled perturbation of the observation), then
/// correct the posteriors from the resulting error. Weights stay frozen.
pub fn generate_closed_loop(
    checkpoint: &Checkpoint,
    class: usize,
    timesteps: usize,
    plant_config: &PlantConfig,
    perturbation: Option<&PerturbationSchedule>,
    seed: u64,
) -> Result<RunReport> {
    let config = &checkpoint.config;
    let params = &checkpoint.params;
    plant_config.validate()?;
    if let Some(p) = perturbation {
        p.validate(timesteps, config.output_dim)?;
    }
    let embedding = one_hot(class, config.num_classes)?;
    let mut plant = Plant::new(plant_config.clone(), seed);

    let mut posteriors = initial_posteriors(config);
    let mut trajectory = Vec::with_capacity(timesteps);
    let mut per_step = Vec::with_capacity(timesteps);
    let mut c_history = Vec::with_capacity(timesteps);
    for t in 0..timesteps {
        let (priors, prediction) = prior_pass(params, config, &embedding, &posteriors)?;
        let mut observation = plant.observe(&prediction);
        if let Some(p) = perturbation {
            if p.active_at(t) {
                for (o, d) in observation.iter_mut().zip(&p.offset) {
                    *o += d;
                }
            }
        }
        let sensory_error: Vec<f64> = prediction
            .iter()
            .zip(&observation)
            .map(|(p, o)| p - o)
            .collect();
        let states = posterior_update(params, config, &priors, &sensory_error)?;
        per_step.push(StepStats {
            t,
            sensory_err_norm: norm2(&sensory_error),
            layer_err_norms: states.iter().map(|s| norm2(&s.layer_error)).collect(),
        });
        posteriors = states.into_iter().map(|s| s.h_posterior).collect();
        trajectory.push(observation);
        c_history.push(embedding.values.clone());
    }

    Ok(RunReport {
        trial_id: format!("gen_class{class}_seed{seed}"),
        class_true: Some(class),
        class_top1: None,
        class_top2: None,
        final_mse: None,
        trajectory,
        per_step,
        c_history,
    })
}

/// Open-loop rollout (no observations at all): the pure prior trajectory.
pub fn generate_open_loop(
    checkpoint: &Checkpoint,
    class: usize,
    timesteps: usize,
) -> Result<Vec<Vec<f64>>> {
    let config = &checkpoint.config;
    let embedding = one_hot(class, config.num_classes)?;
    let mut posteriors = initial_posteriors(config);
    let mut trajectory = Vec::with_capacity(timesteps);
    for _ in 0..timesteps {
        let (priors, prediction) = prior_pass(&checkpoint.params, config, &embedding, &posteriors)?;
        posteriors = priors;
        trajectory.push(prediction);
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::params::NetworkParams;

    fn toy_checkpoint(alpha: f64) -> Checkpoint {
        let config =
            ModelConfig::new(vec![6, 3], vec![4.0, 8.0], vec![alpha, alpha / 10.0], 3, 2).unwrap();
        let params = NetworkParams::init(&config, 40);
        Checkpoint::new(config, params)
    }

    #[test]
    fn ideal_plant_with_zero_alpha_matches_open_loop() {
        let ckpt = toy_checkpoint(0.0);
        let report =
            generate_closed_loop(&ckpt, 1, 20, &PlantConfig::default(), None, 0).unwrap();
        let open = generate_open_loop(&ckpt, 1, 20).unwrap();
        assert_eq!(report.trajectory, open);
        assert!(report.per_step.iter().all(|s| s.sensory_err_norm == 0.0));
    }

    #[test]
    fn ideal_plant_error_is_exactly_offset_inside_window() {
        let ckpt = toy_checkpoint(0.05);
        let perturb = PerturbationSchedule {
            start_step: 8,
            end_step: 11,
            offset: vec![0.2, 0.0],
        };
        let report =
            generate_closed_loop(&ckpt, 0, 20, &PlantConfig::default(), Some(&perturb), 0)
                .unwrap();
        for s in &report.per_step {
            if perturb.active_at(s.t) {
                assert!(
                    (s.sensory_err_norm - 0.2).abs() < 1e-12,
                    "t={} err {}",
                    s.t,
                    s.sensory_err_norm
                );
            } else {
                assert_eq!(s.sensory_err_norm, 0.0, "t={}", s.t);
            }
        }
    }

    #[test]
    fn noisy_plant_is_seed_deterministic() {
        let ckpt = toy_checkpoint(0.05);
        let plant = PlantConfig {
            mode: PlantMode::Noisy,
            sigma: 0.02,
            lambda: 1.0,
        };
        let a = generate_closed_loop(&ckpt, 2, 15, &plant, None, 7).unwrap();
        let b = generate_closed_loop(&ckpt, 2, 15, &plant, None, 7).unwrap();
        let c = generate_closed_loop(&ckpt, 2, 15, &plant, None, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trajectory, c.trajectory);
    }

    #[test]
    fn lagged_plant_tracks_behind_predictions() {
        let ckpt = toy_checkpoint(0.01);
        let plant = PlantConfig {
            mode: PlantMode::Lagged,
            sigma: 0.0,
            lambda: 0.5,
        };
        let report = generate_closed_loop(&ckpt, 0, 10, &plant, None, 0).unwrap();
        // First step starts on-track, later steps generally lag.
        assert_eq!(report.per_step[0].sensory_err_norm, 0.0);
    }

    #[test]
    fn generation_does_not_mutate_checkpoint() {
        let ckpt = toy_checkpoint(0.05);
        let before = serde_json::to_string(&ckpt).unwrap();
        let _ = generate_closed_loop(&ckpt, 0, 30, &PlantConfig::default(), None, 3).unwrap();
        assert_eq!(before, serde_json::to_string(&ckpt).unwrap());
    }

    #[test]
    fn invalid_windows_are_rejected() {
        let p = PerturbationSchedule {
            start_step: 5,
            end_step: 3,
            offset: vec![0.0, 0.0],
        };
        assert!(p.validate(10, 2).is_err());
        let p = PerturbationSchedule {
            start_step: 0,
            end_step: 10,
            offset: vec![0.0, 0.0],
        };
        assert!(p.validate(10, 2).is_err());
    }
}
