use super::{
    parse_config, ActMode, AlgoError, Algorithm, Checkpoint, Learner, NetworkRecord, Policy, ReplayBuffer,
    ReplayTransition, TrainObserver, UpdateMetrics, VecEnv, CHECKPOINT_FORMAT_VERSION,
};
use crate::nn::{argmax, clip_global_norm, layer_sizes, AdamState, ForwardCache, Mlp, DEFAULT_HIDDEN};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    /// Environment steps between hard target-network copies.
    pub target_sync_interval: u64,
    pub exploration_fraction: f64,
    pub exploration_initial: f64,
    pub exploration_final: f64,
    pub learning_rate: f64,
    /// When set, the learning rate decays linearly to this value over the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate_final: Option<f64>,
    /// Environment steps collected before the first gradient step.
    pub learning_starts: u64,
    /// Vectorized environment steps between gradient steps.
    pub train_freq: u64,
    pub gradient_steps: usize,
    pub max_grad_norm: f64,
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    /// Environment steps aggregated into one metrics row.
    pub log_interval: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            buffer_size: 100_000,
            batch_size: 32,
            target_sync_interval: 2000,
            exploration_fraction: 0.1,
            exploration_initial: 1.0,
            exploration_final: 0.05,
            learning_rate: 1e-4,
            learning_rate_final: None,
            learning_starts: 1000,
            train_freq: 4,
            gradient_steps: 1,
            max_grad_norm: 10.0,
            reward_scale: 1e-3,
            hidden: DEFAULT_HIDDEN.to_vec(),
            log_interval: 2048,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |msg: &str| Err(AlgoError::Config(format!("dqn: {msg}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.buffer_size == 0
            || self.batch_size == 0
            || self.target_sync_interval == 0
            || self.train_freq == 0
            || self.gradient_steps == 0
            || self.log_interval == 0
        {
            return bad("counts must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.exploration_fraction)
            || !(0.0..=1.0).contains(&self.exploration_initial)
            || !(0.0..=1.0).contains(&self.exploration_final)
        {
            return bad("exploration settings must lie in [0, 1]");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        let coefs = [
            self.learning_rate,
            self.learning_rate_final.unwrap_or(0.0),
            self.max_grad_norm,
            self.reward_scale,
        ];
        if coefs.iter().any(|v| !v.is_finite() || *v < 0.0) || self.max_grad_norm == 0.0 {
            return bad("coefficients must be finite and non-negative, max_grad_norm positive");
        }
        Ok(())
    }
}

/// Linear decay from the initial to the final rate over the first
/// `exploration_fraction` of `total_steps`, constant afterwards.
pub fn epsilon_at(step: u64, total_steps: u64, cfg: &DqnConfig) -> f64 {
    let horizon = cfg.exploration_fraction * total_steps as f64;
    if horizon <= 0.0 {
        return cfg.exploration_final;
    }
    let progress = step as f64 / horizon;
    if progress >= 1.0 {
        return cfg.exploration_final;
    }
    cfg.exploration_initial + progress * (cfg.exploration_final - cfg.exploration_initial)
}

/// `r` for terminal transitions, `r + gamma * max_a' Q_target(s', a')` otherwise.
pub fn dqn_target(reward: f64, done: bool, next_q: &[f64], gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One Adam step on the mean squared Bellman error over a uniform minibatch.
/// Returns the loss before the step.
pub fn dqn_update(
    q_net: &mut Mlp,
    target_net: &Mlp,
    optimizer: &mut AdamState,
    buffer: &ReplayBuffer,
    cfg: &DqnConfig,
    rng: &mut dyn RngCore,
) -> Result<f64, AlgoError> {
    let indices = buffer.sample_indices(cfg.batch_size, rng);
    let m = indices.len() as f64;
    let mut grads = q_net.zero_grads();
    let mut cache = ForwardCache::default();
    let mut loss = 0.0;
    for i in indices {
        let tr = buffer.get(i);
        let y = if tr.done {
            tr.reward
        } else {
            dqn_target(tr.reward, false, &target_net.forward(&tr.next_observation)?, cfg.gamma)
        };
        q_net.forward_cached(&tr.observation, &mut cache)?;
        let err = cache.output()[tr.action] - y;
        loss += err * err / m;
        let mut out_grad = vec![0.0; q_net.output_dim()];
        out_grad[tr.action] = 2.0 * err / m;
        q_net.backward(&mut cache, &out_grad, &mut grads)?;
    }
    clip_global_norm(&mut grads, cfg.max_grad_norm);
    optimizer.step(q_net.params_mut(), &grads)?;
    Ok(loss)
}

/// Greedy (or epsilon-greedy while sampling) policy over a Q-network.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    q_net: Mlp,
    epsilon: f64,
    config: serde_json::Value,
    env_steps: u64,
}

impl DqnPolicy {
    pub fn new(q_net: Mlp, epsilon: f64, config: serde_json::Value, env_steps: u64) -> Self {
        Self {
            q_net,
            epsilon,
            config,
            env_steps,
        }
    }

    pub fn q_values(&self, observation: &[f64]) -> Result<Vec<f64>, AlgoError> {
        Ok(self.q_net.forward(observation)?)
    }
}

fn q_checkpoint(q_net: &Mlp, target: Option<&Mlp>, opt: Option<&AdamState>, config: serde_json::Value, env_steps: u64) -> Checkpoint {
    let mut networks = BTreeMap::new();
    networks.insert("q".to_string(), NetworkRecord::new(q_net, opt));
    if let Some(t) = target {
        networks.insert("q_target".to_string(), NetworkRecord::new(t, None));
    }
    Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        algorithm: "dqn".into(),
        observation_dim: q_net.input_dim(),
        num_actions: q_net.output_dim(),
        env_steps,
        observation_scaling: None,
        config,
        networks,
    }
}

impl Policy for DqnPolicy {
    fn algorithm(&self) -> &str {
        "dqn"
    }

    fn num_actions(&self) -> usize {
        self.q_net.output_dim()
    }

    fn act(&mut self, observation: &[f64], mode: ActMode, rng: &mut dyn RngCore) -> Result<usize, AlgoError> {
        if mode == ActMode::Sample && rng.random::<f64>() < self.epsilon {
            return Ok(rng.random_range(0..self.num_actions()));
        }
        Ok(argmax(&self.q_net.forward(observation)?))
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        Some(q_checkpoint(&self.q_net, None, None, self.config.clone(), self.env_steps))
    }
}

pub struct Dqn {
    cfg: DqnConfig,
    q_net: Mlp,
    target_net: Mlp,
    optimizer: AdamState,
    buffer: ReplayBuffer,
    env_steps: u64,
    updates: u64,
}

impl Dqn {
    pub fn new(observation_dim: usize, num_actions: usize, cfg: DqnConfig, seed: u64) -> Result<Self, AlgoError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = layer_sizes(observation_dim, &cfg.hidden, num_actions);
        let q_net = Mlp::orthogonal(&sizes, 2f64.sqrt(), 1.0, &mut rng)?;
        Ok(Self {
            target_net: q_net.clone(),
            optimizer: AdamState::new(q_net.num_params(), cfg.learning_rate),
            buffer: ReplayBuffer::new(cfg.buffer_size),
            q_net,
            cfg,
            env_steps: 0,
            updates: 0,
        })
    }

    pub fn q_network(&self) -> &Mlp {
        &self.q_net
    }

    pub fn gradient_updates(&self) -> u64 {
        self.updates
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).unwrap_or(serde_json::Value::Null)
    }
}

impl Learner for Dqn {
    fn algorithm(&self) -> &'static str {
        "dqn"
    }

    fn learn(
        &mut self,
        envs: &mut VecEnv,
        total_steps: u64,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn TrainObserver,
    ) -> Result<(), AlgoError> {
        let start = self.env_steps;
        let target = start + total_steps;
        let n_envs = envs.len() as u64;
        let mut next_sync = start + self.cfg.target_sync_interval;
        let mut next_log = start + self.cfg.log_interval;
        let mut iteration = 0u64;
        let (mut reward_sum, mut reward_count) = (0.0, 0u64);
        let (mut loss_sum, mut loss_count) = (0.0, 0u64);
        while self.env_steps < target {
            let done = self.env_steps - start;
            let eps = epsilon_at(done, total_steps, &self.cfg);
            if let Some(final_lr) = self.cfg.learning_rate_final {
                let progress = done as f64 / total_steps.max(1) as f64;
                self.optimizer.learning_rate =
                    self.cfg.learning_rate + progress * (final_lr - self.cfg.learning_rate);
            }
            let mut actions = Vec::with_capacity(envs.len());
            for obs in envs.observations() {
                let a = if rng.random::<f64>() < eps {
                    rng.random_range(0..envs.num_actions())
                } else {
                    argmax(&self.q_net.forward(obs)?)
                };
                actions.push(a);
            }
            let before: Vec<Vec<f64>> = envs.observations().to_vec();
            let steps = envs.step(&actions)?;
            for (e, (step, observation)) in steps.into_iter().zip(before).enumerate() {
                reward_sum += step.reward;
                reward_count += 1;
                let next_observation = step
                    .final_observation
                    .unwrap_or_else(|| envs.observations()[e].clone());
                self.buffer.push(ReplayTransition {
                    observation,
                    action: actions[e],
                    reward: step.reward * self.cfg.reward_scale,
                    next_observation,
                    done: step.terminated,
                });
            }
            self.env_steps += n_envs;
            iteration += 1;
            if self.env_steps - start >= self.cfg.learning_starts
                && iteration.is_multiple_of(self.cfg.train_freq)
                && self.buffer.len() >= self.cfg.batch_size
            {
                for _ in 0..self.cfg.gradient_steps {
                    loss_sum += dqn_update(
                        &mut self.q_net,
                        &self.target_net,
                        &mut self.optimizer,
                        &self.buffer,
                        &self.cfg,
                        rng,
                    )?;
                    loss_count += 1;
                    self.updates += 1;
                }
            }
            if self.env_steps >= next_sync {
                self.target_net = self.q_net.clone();
                next_sync += self.cfg.target_sync_interval;
            }
            if self.env_steps >= next_log || self.env_steps >= target {
                next_log += self.cfg.log_interval;
                let metrics = UpdateMetrics {
                    update_index: self.updates,
                    env_steps: self.env_steps,
                    mean_reward: (reward_count > 0).then(|| reward_sum / reward_count as f64),
                    value_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
                    approx_kl: None,
                    explained_variance: None,
                    entropy: None,
                    clip_fraction: None,
                };
                (reward_sum, reward_count, loss_sum, loss_count) = (0.0, 0, 0.0, 0);
                observer.on_update(&metrics, &|| self.checkpoint())?;
            }
        }
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn checkpoint(&self) -> Checkpoint {
        q_checkpoint(
            &self.q_net,
            Some(&self.target_net),
            Some(&self.optimizer),
            self.config_json(),
            self.env_steps,
        )
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(DqnPolicy::new(
            self.q_net.clone(),
            self.cfg.exploration_final,
            self.config_json(),
            self.env_steps,
        ))
    }
}

pub(crate) struct DqnAlgorithm;

impl Algorithm for DqnAlgorithm {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn default_config(&self) -> serde_json::Value {
        serde_json::to_value(DqnConfig::default()).unwrap_or_default()
    }

    fn validate_config(&self, config: &serde_json::Value) -> Result<(), AlgoError> {
        parse_config::<DqnConfig>(config)?.validate()
    }

    fn learner(
        &self,
        observation_dim: usize,
        num_actions: usize,
        config: &serde_json::Value,
        seed: u64,
    ) -> Result<Box<dyn Learner>, AlgoError> {
        Ok(Box::new(Dqn::new(observation_dim, num_actions, parse_config(config)?, seed)?))
    }

    fn restore(&self, checkpoint: &Checkpoint) -> Result<Box<dyn Policy>, AlgoError> {
        let q_net = checkpoint.network("q")?;
        if q_net.input_dim() != checkpoint.observation_dim || q_net.output_dim() != checkpoint.num_actions {
            return Err(AlgoError::Checkpoint("network shapes disagree with header".into()));
        }
        let cfg: DqnConfig = parse_config(&checkpoint.config).unwrap_or_default();
        Ok(Box::new(DqnPolicy::new(
            q_net,
            cfg.exploration_final,
            checkpoint.config.clone(),
            checkpoint.env_steps,
        )))
    }
}
