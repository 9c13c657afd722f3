//! Per-trial report format shared by generation and inference runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Per-timestep scalar diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub t: usize,
    /// ‖prediction - observation‖₂ at this step.
    pub sensory_err_norm: f64,
    /// Per-layer ‖h_prior - h_posterior‖₂, bottom first.
    pub layer_err_norms: Vec<f64>,
}

/// One trial's outputs. Generation runs leave the class estimates and
/// final_mse null; inference runs fill them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trial_id: String,
    pub class_true: Option<usize>,
    pub class_top1: Option<usize>,
    pub class_top2: Option<usize>,
    /// Final past-reconstruction MSE (the confidence statistic).
    pub final_mse: Option<f64>,
    /// Generation: the plant's trajectory. Inference: the model's live
    /// predictions of the observed motion.
    pub trajectory: Vec<Vec<f64>>,
    pub per_step: Vec<StepStats>,
    /// Class-embedding value at each step (constant in generation runs).
    pub c_history: Vec<Vec<f64>>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json)
    }
}
