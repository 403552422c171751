//! Training configuration, loadable from a flat-key JSON file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::loss::LossConfig;

/// All knobs of one training run. The JSON schema is exactly these field
/// names; unknown keys are rejected so typos fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of the train split carved into validation when a dataset
    /// arrives without one.
    pub val_fraction: f64,
    pub dropout_rate: f64,
    /// Hidden widths of the flattened baseline.
    pub fc_hidden: (usize, usize),
    pub checkpoint_dir: Option<PathBuf>,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            lr: 5e-4,
            epochs: 250,
            seed: 0,
            val_fraction: 0.15,
            dropout_rate: 0.6,
            fc_hidden: (512, 512),
            checkpoint_dir: None,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArg("batch_size must be positive".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::InvalidArg(format!("lr {} must be positive", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArg("epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidArg(format!(
                "val_fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArg(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<TrainConfig> {
        let cfg: TrainConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
