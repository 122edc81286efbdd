//! JSON configuration file. Every field is optional; command-line flags
//! override whatever the file sets.

use std::path::Path;

use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub threshold: Option<f32>,
    pub grid: Option<String>,
    pub bind: Option<String>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub pseudo: PseudoSection,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f32>,
    pub l2_reg: Option<f32>,
    pub latent_dim: Option<usize>,
    pub negatives_per_positive: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoSection {
    pub sigma: Option<f32>,
    pub per_query: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}
