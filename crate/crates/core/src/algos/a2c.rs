use super::actor_critic::collect_rollout;
use super::{
    parse_config, ActorCritic, ActorCriticPolicy, AlgoError, Algorithm, Checkpoint, GaeParams, Learner,
    Policy, RolloutBuffer, TrainObserver, UpdateMetrics, VecEnv,
};
use crate::nn::{clip_global_norm, AdamState, Categorical, ForwardCache, DEFAULT_HIDDEN};
use crate::stats::explained_variance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2cConfig {
    pub gamma: f64,
    /// Steps per environment between updates.
    pub n_steps: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    /// Updates aggregated into one metrics row.
    pub log_interval: usize,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_steps: 5,
            value_coef: 0.5,
            entropy_coef: 0.0,
            learning_rate: 1e-4,
            max_grad_norm: 0.5,
            reward_scale: 1e-3,
            hidden: DEFAULT_HIDDEN.to_vec(),
            log_interval: 100,
        }
    }
}

impl A2cConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |msg: &str| Err(AlgoError::Config(format!("a2c: {msg}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.n_steps == 0 || self.log_interval == 0 {
            return bad("n_steps and log_interval must be at least 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        let coefs = [
            self.value_coef,
            self.entropy_coef,
            self.learning_rate,
            self.max_grad_norm,
            self.reward_scale,
        ];
        if coefs.iter().any(|v| !v.is_finite() || *v < 0.0) || self.max_grad_norm == 0.0 {
            return bad("coefficients must be finite and non-negative, max_grad_norm positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct A2cDiagnostics {
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Actor-critic gradients over a buffer whose advantages hold n-step
/// returns minus values. Advantages are constants for the actor.
pub fn a2c_gradients(
    net: &ActorCritic,
    buffer: &RolloutBuffer,
    cfg: &A2cConfig,
    policy_grads: &mut [f64],
    value_grads: &mut [f64],
) -> Result<A2cDiagnostics, AlgoError> {
    let n = buffer.len();
    let mut diag = A2cDiagnostics::default();
    if n == 0 {
        return Ok(diag);
    }
    let m = n as f64;
    let mut policy_cache = ForwardCache::default();
    let mut value_cache = ForwardCache::default();
    for i in 0..n {
        let obs = &buffer.observations[i];
        let advantage = buffer.advantages[i];
        net.policy.forward_cached(obs, &mut policy_cache)?;
        let dist = Categorical::new(policy_cache.output());
        let action = buffer.actions[i];
        diag.actor_loss -= dist.log_prob(action) * advantage / m;
        diag.entropy += dist.entropy() / m;
        let mut logit_grad: Vec<f64> = dist
            .log_prob_grad(action)
            .into_iter()
            .map(|d| -advantage * d / m)
            .collect();
        if cfg.entropy_coef != 0.0 {
            for (lg, d) in logit_grad.iter_mut().zip(dist.entropy_grad()) {
                *lg -= cfg.entropy_coef * d / m;
            }
        }
        net.policy.backward(&mut policy_cache, &logit_grad, policy_grads)?;

        net.value.forward_cached(obs, &mut value_cache)?;
        let err = value_cache.output()[0] - buffer.returns[i];
        diag.value_loss += err * err / m;
        net.value
            .backward(&mut value_cache, &[2.0 * cfg.value_coef * err / m], value_grads)?;
    }
    Ok(diag)
}

pub struct A2c {
    cfg: A2cConfig,
    net: ActorCritic,
    policy_opt: AdamState,
    value_opt: AdamState,
    env_steps: u64,
    updates: u64,
}

#[derive(Default)]
struct Window {
    updates: usize,
    reward: f64,
    value_loss: f64,
    entropy: f64,
    returns: Vec<f64>,
    values: Vec<f64>,
}

impl A2c {
    pub fn new(observation_dim: usize, num_actions: usize, cfg: A2cConfig, seed: u64) -> Result<Self, AlgoError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ActorCritic::new(observation_dim, num_actions, &cfg.hidden, &mut rng)?;
        Ok(Self {
            policy_opt: AdamState::new(net.policy.num_params(), cfg.learning_rate),
            value_opt: AdamState::new(net.value.num_params(), cfg.learning_rate),
            cfg,
            net,
            env_steps: 0,
            updates: 0,
        })
    }

    pub fn network(&self) -> &ActorCritic {
        &self.net
    }

    /// One gradient step for each network.
    pub fn update(&mut self, buffer: &RolloutBuffer) -> Result<A2cDiagnostics, AlgoError> {
        let mut pg = self.net.policy.zero_grads();
        let mut vg = self.net.value.zero_grads();
        let diag = a2c_gradients(&self.net, buffer, &self.cfg, &mut pg, &mut vg)?;
        clip_global_norm(&mut pg, self.cfg.max_grad_norm);
        clip_global_norm(&mut vg, self.cfg.max_grad_norm);
        self.policy_opt.step(self.net.policy.params_mut(), &pg)?;
        self.value_opt.step(self.net.value.params_mut(), &vg)?;
        Ok(diag)
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).unwrap_or(serde_json::Value::Null)
    }
}

impl Learner for A2c {
    fn algorithm(&self) -> &'static str {
        "a2c"
    }

    fn learn(
        &mut self,
        envs: &mut VecEnv,
        total_steps: u64,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn TrainObserver,
    ) -> Result<(), AlgoError> {
        let gae = GaeParams {
            gamma: self.cfg.gamma,
            lambda: 1.0,
        };
        let target = self.env_steps + total_steps;
        let mut window = Window::default();
        while self.env_steps < target {
            let (buffer, stats) =
                collect_rollout(&self.net, envs, self.cfg.n_steps, self.cfg.reward_scale, gae, rng)?;
            self.env_steps += buffer.len() as u64;
            let diag = self.update(&buffer)?;
            self.updates += 1;
            window.updates += 1;
            window.reward += stats.mean_reward;
            window.value_loss += diag.value_loss;
            window.entropy += diag.entropy;
            window.returns.extend_from_slice(&buffer.returns);
            window.values.extend_from_slice(&buffer.values);
            if window.updates == self.cfg.log_interval || self.env_steps >= target {
                let k = window.updates as f64;
                let metrics = UpdateMetrics {
                    update_index: self.updates,
                    env_steps: self.env_steps,
                    mean_reward: Some(window.reward / k),
                    value_loss: Some(window.value_loss / k),
                    approx_kl: None,
                    explained_variance: explained_variance(&window.returns, &window.values),
                    entropy: Some(window.entropy / k),
                    clip_fraction: None,
                };
                window = Window::default();
                observer.on_update(&metrics, &|| self.checkpoint())?;
            }
        }
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn checkpoint(&self) -> Checkpoint {
        self.net.checkpoint(
            "a2c",
            self.config_json(),
            self.env_steps,
            Some((&self.policy_opt, &self.value_opt)),
        )
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(ActorCriticPolicy::new("a2c", self.net.clone(), self.config_json(), self.env_steps))
    }
}

pub(crate) struct A2cAlgorithm;

impl Algorithm for A2cAlgorithm {
    fn name(&self) -> &'static str {
        "a2c"
    }

    fn default_config(&self) -> serde_json::Value {
        serde_json::to_value(A2cConfig::default()).unwrap_or_default()
    }

    fn validate_config(&self, config: &serde_json::Value) -> Result<(), AlgoError> {
        parse_config::<A2cConfig>(config)?.validate()
    }

    fn learner(
        &self,
        observation_dim: usize,
        num_actions: usize,
        config: &serde_json::Value,
        seed: u64,
    ) -> Result<Box<dyn Learner>, AlgoError> {
        Ok(Box::new(A2c::new(observation_dim, num_actions, parse_config(config)?, seed)?))
    }

    fn restore(&self, checkpoint: &Checkpoint) -> Result<Box<dyn Policy>, AlgoError> {
        let net = ActorCritic::from_checkpoint(checkpoint)?;
        Ok(Box::new(ActorCriticPolicy::new(
            "a2c",
            net,
            checkpoint.config.clone(),
            checkpoint.env_steps,
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::toy::Bandit;
    use crate::algos::{MetricsLog, RolloutStep};
    use crate::env::Environment;

    fn bandit_envs() -> VecEnv {
        VecEnv::new(vec![Box::new(Bandit) as Box<dyn Environment>], 0).unwrap()
    }

    #[test]
    fn zero_advantage_gives_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ActorCritic::new(2, 3, &[8], &mut rng).unwrap();
        let mut b = RolloutBuffer::new(1);
        for i in 0..4 {
            b.push(RolloutStep {
                observation: vec![i as f64, 1.0],
                action: i % 3,
                reward: 0.0,
                value: 0.0,
                log_prob: 0.0,
                terminated: false,
                truncated: false,
                bootstrap_value: 0.0,
            });
        }
        b.advantages = vec![0.0; 4];
        b.returns = vec![1.0; 4];
        let mut pg = net.policy.zero_grads();
        let mut vg = net.value.zero_grads();
        a2c_gradients(&net, &b, &A2cConfig::default(), &mut pg, &mut vg).unwrap();
        assert!(pg.iter().all(|&g| g == 0.0));
        assert!(vg.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let cfg = A2cConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut a2c = A2c::new(1, 2, cfg, 1).unwrap();
        let before = a2c.network().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        a2c.learn(&mut bandit_envs(), 50, &mut rng, &mut MetricsLog::default()).unwrap();
        assert_eq!(a2c.network(), &before);
        assert_eq!(a2c.env_steps(), 50);
    }
}
