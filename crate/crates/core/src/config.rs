//! Model architecture configuration and the six named presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which top-down activity feeds a layer's prior.
///
/// The prior of layer n (below the top) receives tanh-squashed activity from
/// layer n+1. The update rule as written wants the layer-above posterior at
/// the *current* step, but that posterior only exists after the observation,
/// which in turn needs the priors — a circular schedule. Two self-consistent
/// resolutions are supported:
///
/// - [`TopdownSource::PriorT`] (default): use the layer-above prior computed
///   earlier in the same top-down sweep.
/// - [`TopdownSource::PosteriorTminus1`]: use the layer-above posterior from
///   the previous timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TopdownSource {
    #[default]
    PriorT,
    PosteriorTminus1,
}

/// Architecture of a stacked predictive-coding RNN.
///
/// Layers are indexed bottom-up: index 0 is the sensory-facing layer that
/// produces the output, index N-1 is the top layer that receives the class
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of layers N (redundant with the list lengths; kept explicit in
    /// the file format and validated against them).
    pub num_layers: usize,
    /// Hidden units per layer, bottom first.
    pub nodes_per_layer: Vec<usize>,
    /// Per-layer time constants τ (leak coefficient 1 - 1/τ). Must be ≥ 1.
    pub tau_h: Vec<f64>,
    /// Per-layer posterior update rates α_h.
    pub alpha_h: Vec<f64>,
    /// Number of classes K (width of the embedding vector).
    pub num_classes: usize,
    /// Output dimensionality D.
    pub output_dim: usize,
    /// Per-layer weights on the layer-error terms of the loss. Defaults to 1.
    pub loss_layer_weights: Vec<f64>,
    #[serde(default)]
    pub topdown_source: TopdownSource,
}

impl ModelConfig {
    pub fn new(
        nodes_per_layer: Vec<usize>,
        tau_h: Vec<f64>,
        alpha_h: Vec<f64>,
        num_classes: usize,
        output_dim: usize,
    ) -> Result<Self> {
        let n = nodes_per_layer.len();
        let cfg = ModelConfig {
            num_layers: n,
            nodes_per_layer,
            tau_h,
            alpha_h,
            num_classes,
            output_dim,
            loss_layer_weights: vec![1.0; n],
            topdown_source: TopdownSource::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_topdown_source(mut self, source: TopdownSource) -> Self {
        self.topdown_source = source;
        self
    }

    pub fn with_loss_layer_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.loss_layer_weights = weights;
        self.validate()?;
        Ok(self)
    }

    pub fn num_layers(&self) -> usize {
        self.nodes_per_layer.len()
    }

    pub fn top_layer(&self) -> usize {
        self.nodes_per_layer.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes_per_layer.len();
        if n == 0 {
            return Err(Error::argument("at least one layer is required"));
        }
        if self.num_layers != n {
            return Err(Error::argument(format!(
                "num_layers {} does not match nodes_per_layer length {}",
                self.num_layers, n
            )));
        }
        if self.tau_h.len() != n || self.alpha_h.len() != n {
            return Err(Error::argument(format!(
                "tau_h ({}) and alpha_h ({}) must both have {} entries",
                self.tau_h.len(),
                self.alpha_h.len(),
                n
            )));
        }
        if self.nodes_per_layer.iter().any(|&d| d == 0) {
            return Err(Error::argument("layer widths must be positive"));
        }
        if self.tau_h.iter().any(|&t| !(t.is_finite() && t >= 1.0)) {
            return Err(Error::argument(
                "tau_h entries must be finite and >= 1 so the leak stays in [0,1)",
            ));
        }
        if self.alpha_h.iter().any(|&a| !(a.is_finite() && a >= 0.0)) {
            return Err(Error::argument("alpha_h entries must be finite and >= 0"));
        }
        if self.num_classes == 0 {
            return Err(Error::argument("num_classes must be >= 1"));
        }
        if self.output_dim == 0 {
            return Err(Error::argument("output_dim must be >= 1"));
        }
        if self.loss_layer_weights.len() != n {
            return Err(Error::argument(format!(
                "loss_layer_weights must have one entry per layer ({} != {})",
                self.loss_layer_weights.len(),
                n
            )));
        }
        if self
            .loss_layer_weights
            .iter()
            .any(|&w| !(w.is_finite() && w >= 0.0))
        {
            return Err(Error::argument(
                "loss_layer_weights entries must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// The six named model sizes (three single-layer, three hierarchical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    SingleMini,
    SingleStandard,
    SingleLarge,
    MultiMini,
    MultiStandard,
    MultiLarge,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::SingleMini,
        Preset::SingleStandard,
        Preset::SingleLarge,
        Preset::MultiMini,
        Preset::MultiStandard,
        Preset::MultiLarge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::SingleMini => "SingleMini",
            Preset::SingleStandard => "SingleStandard",
            Preset::SingleLarge => "SingleLarge",
            Preset::MultiMini => "MultiMini",
            Preset::MultiStandard => "MultiStandard",
            Preset::MultiLarge => "MultiLarge",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// Layer widths, bottom first.
    pub fn nodes(&self) -> Vec<usize> {
        match self {
            Preset::SingleMini => vec![50],
            Preset::SingleStandard => vec![150],
            Preset::SingleLarge => vec![300],
            Preset::MultiMini => vec![50, 15, 7],
            Preset::MultiStandard => vec![120, 40, 20],
            Preset::MultiLarge => vec![250, 70, 20],
        }
    }

    pub fn tau_h(&self) -> Vec<f64> {
        match self {
            Preset::SingleMini | Preset::SingleStandard | Preset::SingleLarge => vec![10.0],
            _ => vec![10.0, 20.0, 40.0],
        }
    }

    pub fn alpha_h(&self) -> Vec<f64> {
        match self {
            Preset::SingleMini | Preset::SingleStandard | Preset::SingleLarge => vec![1e-2],
            _ => vec![1e-2, 5e-4, 5e-6],
        }
    }

    /// Expand to a full config for a dataset with the given class count and
    /// output dimension.
    pub fn config(&self, num_classes: usize, output_dim: usize) -> Result<ModelConfig> {
        ModelConfig::new(
            self.nodes(),
            self.tau_h(),
            self.alpha_h(),
            num_classes,
            output_dim,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_table_values() {
        let f = Preset::MultiLarge;
        assert_eq!(f.nodes(), vec![250, 70, 20]);
        assert_eq!(f.tau_h(), vec![10.0, 20.0, 40.0]);
        assert_eq!(f.alpha_h(), vec![1e-2, 5e-4, 5e-6]);
        let a = Preset::SingleMini;
        assert_eq!(a.nodes(), vec![50]);
        assert_eq!(a.tau_h(), vec![10.0]);
        assert_eq!(a.alpha_h(), vec![1e-2]);
    }

    #[test]
    fn preset_round_trips_by_name() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_name(p.name()), Some(p));
        }
        assert_eq!(Preset::from_name("NoSuchPreset"), None);
    }

    #[test]
    fn validation_rejects_bad_tau() {
        let err = ModelConfig::new(vec![4], vec![0.5], vec![0.1], 2, 3);
        assert!(err.is_err());
    }

    #[test]
    fn validation_rejects_length_mismatch() {
        assert!(ModelConfig::new(vec![4, 2], vec![10.0], vec![0.1, 0.1], 2, 3).is_err());
    }

    #[test]
    fn topdown_source_serializes_snake_case() {
        let json = serde_json::to_string(&TopdownSource::PosteriorTminus1).unwrap();
        assert_eq!(json, "\"posterior_tminus1\"");
    }
}
