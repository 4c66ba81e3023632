use super::{ActMode, AlgoError, Checkpoint, NetworkRecord, Policy, CHECKPOINT_FORMAT_VERSION};
use crate::nn::{layer_sizes, AdamState, Categorical, Mlp};
use rand::{Rng, RngCore};
use std::collections::BTreeMap;

/// Separate policy (logits) and value networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub value: Mlp,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        observation_dim: usize,
        num_actions: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self, AlgoError> {
        let gain = 2f64.sqrt();
        Ok(Self {
            policy: Mlp::orthogonal(&layer_sizes(observation_dim, hidden, num_actions), gain, 0.01, rng)?,
            value: Mlp::orthogonal(&layer_sizes(observation_dim, hidden, 1), gain, 1.0, rng)?,
        })
    }

    pub fn observation_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn distribution(&self, observation: &[f64]) -> Result<Categorical, AlgoError> {
        Ok(Categorical::new(&self.policy.forward(observation)?))
    }

    pub fn value(&self, observation: &[f64]) -> Result<f64, AlgoError> {
        Ok(self.value.forward(observation)?[0])
    }

    pub(crate) fn checkpoint(
        &self,
        algorithm: &str,
        config: serde_json::Value,
        env_steps: u64,
        optimizers: Option<(&AdamState, &AdamState)>,
    ) -> Checkpoint {
        let mut networks = BTreeMap::new();
        networks.insert(
            "policy".to_string(),
            NetworkRecord::new(&self.policy, optimizers.map(|o| o.0)),
        );
        networks.insert(
            "value".to_string(),
            NetworkRecord::new(&self.value, optimizers.map(|o| o.1)),
        );
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            algorithm: algorithm.to_string(),
            observation_dim: self.observation_dim(),
            num_actions: self.num_actions(),
            env_steps,
            observation_scaling: None,
            config,
            networks,
        }
    }

    pub(crate) fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self, AlgoError> {
        let policy = checkpoint.network("policy")?;
        let value = checkpoint.network("value")?;
        if policy.input_dim() != checkpoint.observation_dim
            || value.input_dim() != checkpoint.observation_dim
            || policy.output_dim() != checkpoint.num_actions
            || value.output_dim() != 1
        {
            return Err(AlgoError::Checkpoint("network shapes disagree with header".into()));
        }
        Ok(Self { policy, value })
    }
}

/// Policy view of a trained PPO or A2C agent: samples from the categorical
/// head while training, takes its mode when evaluated.
#[derive(Debug, Clone)]
pub struct ActorCriticPolicy {
    algorithm: &'static str,
    net: ActorCritic,
    config: serde_json::Value,
    env_steps: u64,
}

impl ActorCriticPolicy {
    pub fn new(algorithm: &'static str, net: ActorCritic, config: serde_json::Value, env_steps: u64) -> Self {
        Self {
            algorithm,
            net,
            config,
            env_steps,
        }
    }

    pub fn network(&self) -> &ActorCritic {
        &self.net
    }
}

impl Policy for ActorCriticPolicy {
    fn algorithm(&self) -> &str {
        self.algorithm
    }

    fn num_actions(&self) -> usize {
        self.net.num_actions()
    }

    fn act(&mut self, observation: &[f64], mode: ActMode, rng: &mut dyn RngCore) -> Result<usize, AlgoError> {
        let dist = self.net.distribution(observation)?;
        Ok(match mode {
            ActMode::Sample => dist.sample(rng),
            ActMode::Greedy => dist.mode(),
        })
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        Some(
            self.net
                .checkpoint(self.algorithm, self.config.clone(), self.env_steps, None),
        )
    }
}

/// Raw-reward summary of one collected rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RolloutStats {
    pub mean_reward: f64,
}

/// Steps every environment `steps_per_env` times with actions sampled from
/// `net`, storing scaled rewards. GAE is computed before returning.
pub(crate) fn collect_rollout(
    net: &ActorCritic,
    envs: &mut super::VecEnv,
    steps_per_env: usize,
    reward_scale: f64,
    gae: super::GaeParams,
    rng: &mut dyn RngCore,
) -> Result<(super::RolloutBuffer, RolloutStats), AlgoError> {
    let n_envs = envs.len();
    let mut buffer = super::RolloutBuffer::new(n_envs);
    let mut raw_sum = 0.0;
    let mut pending = Vec::with_capacity(n_envs);
    for _ in 0..steps_per_env {
        pending.clear();
        let mut actions = Vec::with_capacity(n_envs);
        for obs in envs.observations() {
            let dist = net.distribution(obs)?;
            let action = dist.sample(rng);
            actions.push(action);
            pending.push((obs.clone(), action, dist.log_prob(action), net.value(obs)?));
        }
        let steps = envs.step(&actions)?;
        for ((observation, action, log_prob, value), step) in pending.drain(..).zip(steps) {
            raw_sum += step.reward;
            let bootstrap_value = match (&step.final_observation, step.truncated && !step.terminated) {
                (Some(last), true) => net.value(last)?,
                _ => 0.0,
            };
            buffer.push(super::RolloutStep {
                observation,
                action,
                reward: step.reward * reward_scale,
                value,
                log_prob,
                terminated: step.terminated,
                truncated: step.truncated,
                bootstrap_value,
            });
        }
    }
    let last_values = envs
        .observations()
        .iter()
        .map(|o| net.value(o))
        .collect::<Result<Vec<_>, _>>()?;
    buffer.compute_returns_and_gae(&last_values, gae);
    let mean_reward = raw_sum / buffer.len().max(1) as f64;
    Ok((buffer, RolloutStats { mean_reward }))
}
