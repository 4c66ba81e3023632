//! Learning algorithms and baseline policies behind a name-keyed registry.
//!
//! Each algorithm implements [`Algorithm`], which builds a [`Learner`] from a
//! JSON config and restores a [`Policy`] from a [`Checkpoint`]. The harness
//! only ever talks to these traits, so adding an algorithm means registering
//! one more entry.

mod a2c;
mod actor_critic;
mod baselines;
mod checkpoint;
mod dqn;
mod ppo;
mod replay;
mod rollout;
pub mod toy;

pub use a2c::{a2c_gradients, A2c, A2cConfig, A2cDiagnostics};
pub use actor_critic::{ActorCritic, ActorCriticPolicy};
pub use baselines::{parse_baseline, BaselineSpec, FixedPolicy, RandomPolicy};
pub use checkpoint::{Checkpoint, NetworkRecord, CHECKPOINT_FORMAT_VERSION};
pub use dqn::{dqn_target, dqn_update, epsilon_at, Dqn, DqnConfig, DqnPolicy};
pub use ppo::{clipped_surrogate, ppo_loss, Ppo, PpoConfig, PpoDiagnostics, PpoLoss, PpoSample};
pub use replay::{ReplayBuffer, ReplayTransition};
pub use rollout::{GaeParams, RolloutBuffer, RolloutStep, SlotStep, VecEnv};

use crate::env::EnvError;
use crate::nn::NnError;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("invalid algorithm config: {0}")]
    Config(String),
    #[error("invalid baseline spec `{0}` (expected `fixed:<units>` or `random`)")]
    BadBaseline(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training observer failed: {0}")]
    Observer(String),
}

/// How a policy picks actions: stochastically while training, greedily when
/// evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

pub trait Policy: Send {
    fn algorithm(&self) -> &str;
    fn num_actions(&self) -> usize;
    /// Index of the chosen action in `0..num_actions()`.
    fn act(&mut self, observation: &[f64], mode: ActMode, rng: &mut dyn RngCore)
        -> Result<usize, AlgoError>;
    /// Serializable state; `None` for parameter-free baselines.
    fn checkpoint(&self) -> Option<Checkpoint>;
}

/// One row of the training metrics CSV. Fields an algorithm does not
/// produce are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update_index: u64,
    pub env_steps: u64,
    pub mean_reward: Option<f64>,
    pub value_loss: Option<f64>,
    pub approx_kl: Option<f64>,
    pub explained_variance: Option<f64>,
    pub entropy: Option<f64>,
    pub clip_fraction: Option<f64>,
}

pub trait TrainObserver {
    /// Called after every logged update. `checkpoint` snapshots the learner
    /// on demand.
    fn on_update(
        &mut self,
        metrics: &UpdateMetrics,
        checkpoint: &dyn Fn() -> Checkpoint,
    ) -> Result<(), AlgoError>;
}

/// Collects metrics in memory.
#[derive(Debug, Default)]
pub struct MetricsLog {
    pub rows: Vec<UpdateMetrics>,
}

impl TrainObserver for MetricsLog {
    fn on_update(&mut self, metrics: &UpdateMetrics, _: &dyn Fn() -> Checkpoint) -> Result<(), AlgoError> {
        self.rows.push(metrics.clone());
        Ok(())
    }
}

pub trait Learner: Send {
    fn algorithm(&self) -> &'static str;
    fn learn(
        &mut self,
        envs: &mut VecEnv,
        total_steps: u64,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn TrainObserver,
    ) -> Result<(), AlgoError>;
    fn env_steps(&self) -> u64;
    fn checkpoint(&self) -> Checkpoint;
    fn policy(&self) -> Box<dyn Policy>;
}

pub trait Algorithm: Send + Sync {
    fn name(&self) -> &'static str;
    fn default_config(&self) -> serde_json::Value;
    /// Fails on unknown keys or invalid values in `config`; `null` selects
    /// the defaults.
    fn validate_config(&self, config: &serde_json::Value) -> Result<(), AlgoError>;
    fn learner(
        &self,
        observation_dim: usize,
        num_actions: usize,
        config: &serde_json::Value,
        seed: u64,
    ) -> Result<Box<dyn Learner>, AlgoError>;
    fn restore(&self, checkpoint: &Checkpoint) -> Result<Box<dyn Policy>, AlgoError>;
}

pub(crate) fn parse_config<T>(config: &serde_json::Value) -> Result<T, AlgoError>
where
    T: Default + serde::de::DeserializeOwned,
{
    if config.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(config.clone()).map_err(|e| AlgoError::Config(e.to_string()))
}

#[derive(Default)]
pub struct Registry {
    algorithms: BTreeMap<&'static str, Box<dyn Algorithm>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with PPO, A2C and DQN.
    pub fn builtin() -> Self {
        let mut registry = Self::new();
        registry.register(Box::new(ppo::PpoAlgorithm));
        registry.register(Box::new(a2c::A2cAlgorithm));
        registry.register(Box::new(dqn::DqnAlgorithm));
        registry
    }

    pub fn register(&mut self, algorithm: Box<dyn Algorithm>) {
        self.algorithms.insert(algorithm.name(), algorithm);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.algorithms.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Algorithm, AlgoError> {
        self.algorithms
            .get(name)
            .map(|a| a.as_ref())
            .ok_or_else(|| AlgoError::UnknownAlgorithm(name.to_string()))
    }

    /// Restores a policy from a checkpoint, dispatching on its algorithm tag.
    pub fn restore(&self, checkpoint: &Checkpoint) -> Result<Box<dyn Policy>, AlgoError> {
        if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(AlgoError::Checkpoint(format!(
                "unsupported format version {}",
                checkpoint.format_version
            )));
        }
        self.get(&checkpoint.algorithm)?.restore(checkpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        let r = Registry::builtin();
        assert_eq!(r.names(), vec!["a2c", "dqn", "ppo"]);
        assert!(matches!(r.get("sac"), Err(AlgoError::UnknownAlgorithm(_))));
    }

    #[test]
    fn configs_reject_unknown_keys() {
        let r = Registry::builtin();
        for name in r.names() {
            let algo = r.get(name).unwrap();
            algo.validate_config(&serde_json::Value::Null).unwrap();
            algo.validate_config(&algo.default_config()).unwrap();
            let bad = serde_json::json!({"learning_rat": 0.1});
            assert!(algo.validate_config(&bad).is_err(), "{name}");
        }
    }
}
