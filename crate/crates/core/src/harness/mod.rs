//! End-to-end workflows: train an agent, evaluate a policy, replicate the
//! full agent roster, and compare groups of evaluation reports.

mod compare;
mod config;
mod eval;
mod replicate;
mod train;

pub use compare::{cmd_compare, compare_groups, load_reports, ComparisonReport, GroupStats, NamedTest};
pub use config::{
    AlgoSection, EvalSection, ExperimentConfig, Preset, ReplicateSection, TrainSection,
};
pub use eval::{cmd_eval, evaluate, EpisodeResult, EvalReport, PolicySource, ProfitSummary};
pub use replicate::{cmd_replicate, AgentKind, FileEntry, Manifest, RosterEntry};
pub use train::{agent_seed, cmd_train, train_agent, TrainOutcome};

use crate::algos::AlgoError;
use crate::env::EnvError;
use crate::stats::StatsError;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl HarnessError {
    /// True for problems with the user's input rather than the run itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::Algo(AlgoError::UnknownAlgorithm(_) | AlgoError::Config(_) | AlgoError::BadBaseline(_))
                | Self::Env(EnvError::Config(_))
        )
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
