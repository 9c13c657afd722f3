//! Checkpoint file format: one JSON document holding the config and every
//! trainable matrix as row-major nested arrays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::NetworkParams;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub params: NetworkParams,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: NetworkParams) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::schema(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        self.config.validate()?;
        self.params.validate_shapes(&self.config)?;
        if let Some(name) = self.params.first_non_finite() {
            return Err(Error::schema(format!("non-finite values in {name}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json)?;
        ckpt.validate()?;
        Ok(ckpt)
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

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_checkpoint() -> Checkpoint {
        let config =
            ModelConfig::new(vec![4, 2], vec![10.0, 20.0], vec![0.01, 0.001], 3, 2).unwrap();
        let params = NetworkParams::init(&config, 17);
        Checkpoint::new(config, params)
    }

    #[test]
    fn json_round_trip_is_value_identical() {
        let ckpt = toy_checkpoint();
        let json = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(ckpt, back);
        // Saving what was loaded reproduces the same bytes.
        assert_eq!(json, back.to_json().unwrap());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut ckpt = toy_checkpoint();
        ckpt.params.b_o = vec![0.0; 5];
        let json = serde_json::to_string(&ckpt).unwrap();
        assert!(Checkpoint::from_json(&json).is_err());
    }

    #[test]
    fn non_finite_params_are_rejected() {
        let mut ckpt = toy_checkpoint();
        ckpt.params.b_o[0] = f64::INFINITY;
        let json = serde_json::to_string(&ckpt).unwrap();
        assert!(Checkpoint::from_json(&json).is_err());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut ckpt = toy_checkpoint();
        ckpt.format_version = 99;
        let json = serde_json::to_string(&ckpt).unwrap();
        assert!(Checkpoint::from_json(&json).is_err());
    }
}
