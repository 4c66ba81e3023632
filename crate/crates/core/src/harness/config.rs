use super::{read_json, HarnessError};
use crate::algos::{BaselineSpec, Registry};
use crate::env::EnvConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// A full experiment description. Every section has defaults, so `{}` is a
/// valid desk-scale PPO configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream in a run is derived from it.
    pub seed: u64,
    /// Output root used when neither the CLI nor the environment sets one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub algo: AlgoSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub replicate: ReplicateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoSection {
    pub name: String,
    /// Algorithm-specific hyperparameters; `null` keeps the defaults.
    pub config: serde_json::Value,
}

impl Default for AlgoSection {
    fn default() -> Self {
        Self {
            name: "ppo".into(),
            config: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub total_steps: u64,
    pub n_envs: usize,
    /// Environment steps between intermediate checkpoints; 0 disables them.
    pub checkpoint_interval: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            n_envs: 4,
            checkpoint_interval: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub horizon: u64,
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            horizon: 1000,
            episodes: 5,
        }
    }
}

/// Agent roster for `replicate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateSection {
    pub ppo_seeds: Vec<u64>,
    pub dqn_seeds: Vec<u64>,
    pub a2c_seeds: Vec<u64>,
    pub fixed_units: Vec<u32>,
    pub random_agents: usize,
    /// Per-algorithm hyperparameter overrides; `null` keeps the defaults.
    pub ppo_config: serde_json::Value,
    pub dqn_config: serde_json::Value,
    pub a2c_config: serde_json::Value,
    /// Write the manifest without training or evaluating.
    pub dry_run: bool,
}

impl Default for ReplicateSection {
    fn default() -> Self {
        Self {
            ppo_seeds: (0..10).collect(),
            dqn_seeds: vec![0],
            a2c_seeds: vec![0],
            fixed_units: (0..15).collect(),
            random_agents: 5,
            ppo_config: serde_json::Value::Null,
            dqn_config: serde_json::Value::Null,
            a2c_config: serde_json::Value::Null,
            dry_run: false,
        }
    }
}

/// Named configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 200k training steps per agent.
    Desk,
    /// 1.5M training steps per agent.
    Full,
}

impl FromStr for Preset {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => Err(HarnessError::Config(format!("unknown preset `{other}` (desk, full)"))),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self::default();
        if preset == Preset::Full {
            cfg.train.total_steps = 1_500_000;
        }
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let cfg: Self = read_json(path).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.env.validate()?;
        let registry = Registry::builtin();
        registry.get(&self.algo.name)?.validate_config(&self.algo.config)?;
        if self.train.total_steps < 1 {
            return bad("train.total_steps must be at least 1".into());
        }
        if self.train.n_envs < 1 {
            return bad("train.n_envs must be at least 1".into());
        }
        if self.eval.episodes < 1 {
            return bad("eval.episodes must be at least 1".into());
        }
        let r = &self.replicate;
        for (name, seeds) in [("ppo_seeds", &r.ppo_seeds), ("dqn_seeds", &r.dqn_seeds), ("a2c_seeds", &r.a2c_seeds)] {
            if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
                return bad(format!("replicate.{name} contains duplicates"));
            }
        }
        if r.fixed_units.iter().collect::<BTreeSet<_>>().len() != r.fixed_units.len() {
            return bad("replicate.fixed_units contains duplicates".into());
        }
        for &k in &r.fixed_units {
            if self.env.params.check_quantity(k).is_err() {
                return bad(format!("replicate.fixed_units: {} is not a valid action", BaselineSpec::Fixed(k)));
            }
        }
        registry.get("ppo")?.validate_config(&r.ppo_config)?;
        registry.get("dqn")?.validate_config(&r.dqn_config)?;
        registry.get("a2c")?.validate_config(&r.a2c_config)?;
        Ok(())
    }

    /// `--out` wins, then `MARKET_RL_OUT`, then `output_dir`, then `runs`.
    pub fn resolve_output(&self, cli: Option<&Path>, env_override: Option<&Path>) -> PathBuf {
        cli.or(env_override)
            .or(self.output_dir.as_deref())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}
