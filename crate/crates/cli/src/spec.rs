//! Resolved command configs. Defaults come from the library, a `--config`
//! JSON file can override any field, and explicit flags win over both.

use std::path::Path;

use duet_core::model::ModelConfig;
use duet_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Full training specification: model layout, optimizer settings, and
/// whether inputs are standardized before training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Fit a scaler on the normal data and train on standardized inputs.
    /// The scaler is written next to the checkpoint.
    pub standardize: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            standardize: false,
        }
    }
}

/// Parses a JSON overrides file into `T`, rejecting unknown content with a
/// usage error so typos surface immediately.
pub fn load_config_file<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("--config {}: {e}", path.display())))
}
