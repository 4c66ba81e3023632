use super::AlgoError;
use crate::nn::{AdamState, Mlp, MlpRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// One network's weights (row-major nested arrays) and optional optimizer
/// state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

impl NetworkRecord {
    pub fn new(net: &Mlp, optimizer: Option<&AdamState>) -> Self {
        let MlpRecord {
            layer_sizes,
            weights,
            biases,
        } = net.to_record();
        Self {
            layer_sizes,
            weights,
            biases,
            optimizer: optimizer.cloned(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp, AlgoError> {
        Ok(Mlp::from_record(&MlpRecord {
            layer_sizes: self.layer_sizes.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        })?)
    }
}

/// A trained agent as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub algorithm: String,
    pub observation_dim: usize,
    pub num_actions: usize,
    pub env_steps: u64,
    /// Observation encoding the agent was trained with, when known.
    #[serde(default)]
    pub observation_scaling: Option<bool>,
    /// Echo of the algorithm config.
    pub config: serde_json::Value,
    pub networks: BTreeMap<String, NetworkRecord>,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<Mlp, AlgoError> {
        self.networks
            .get(name)
            .ok_or_else(|| AlgoError::Checkpoint(format!("missing network `{name}`")))?
            .to_mlp()
    }

    pub fn to_json(&self) -> Result<Vec<u8>, AlgoError> {
        let mut bytes =
            serde_json::to_vec_pretty(self).map_err(|e| AlgoError::Checkpoint(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, AlgoError> {
        serde_json::from_slice(bytes).map_err(|e| AlgoError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), AlgoError> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| AlgoError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AlgoError> {
        let bytes = std::fs::read(path)
            .map_err(|e| AlgoError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }
}
