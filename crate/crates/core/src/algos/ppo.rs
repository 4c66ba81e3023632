use super::actor_critic::collect_rollout;
use super::{
    parse_config, ActorCritic, ActorCriticPolicy, AlgoError, Algorithm, Checkpoint, GaeParams, Learner,
    Policy, RolloutBuffer, TrainObserver, UpdateMetrics, VecEnv,
};
use crate::nn::{clip_global_norm, AdamState, Categorical, ForwardCache, DEFAULT_HIDDEN};
use crate::stats::explained_variance;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    /// Transitions per rollout, summed over all environments.
    pub rollout_length: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub learning_rate: f64,
    /// Multiplier applied to rewards before they enter the loss.
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            rollout_length: 2048,
            minibatch_size: 64,
            epochs: 10,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            learning_rate: 1e-4,
            reward_scale: 1e-3,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |msg: &str| Err(AlgoError::Config(format!("ppo: {msg}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if self.rollout_length == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return bad("rollout_length, minibatch_size and epochs must be at least 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        let finite_nonneg = [
            self.value_coef,
            self.entropy_coef,
            self.max_grad_norm,
            self.learning_rate,
            self.reward_scale,
        ];
        if finite_nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) || self.max_grad_norm == 0.0 {
            return bad("coefficients must be finite and non-negative, max_grad_norm positive");
        }
        Ok(())
    }
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// One training sample; `advantage` is expected to be normalized already.
#[derive(Debug, Clone, Copy)]
pub struct PpoSample<'a> {
    pub observation: &'a [f64],
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub return_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoLoss {
    pub loss: f64,
    /// `-mean(min(r A, clip(r) A))`.
    pub surrogate: f64,
    /// `mean((V - return)^2)`, before `value_coef`.
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Gradient buffers for [`ppo_loss`], one per network.
pub struct PpoGrads<'a> {
    pub policy: &'a mut [f64],
    pub value: &'a mut [f64],
}

/// Clipped-surrogate loss over `batch`, with value and entropy terms.
/// When `grads` is given, the loss gradient is accumulated into it.
pub fn ppo_loss(
    net: &ActorCritic,
    batch: &[PpoSample],
    cfg: &PpoConfig,
    mut grads: Option<PpoGrads>,
) -> Result<PpoLoss, AlgoError> {
    if batch.is_empty() {
        return Ok(PpoLoss::default());
    }
    let m = batch.len() as f64;
    let mut out = PpoLoss::default();
    let mut policy_cache = ForwardCache::default();
    let mut value_cache = ForwardCache::default();
    for s in batch {
        net.policy.forward_cached(s.observation, &mut policy_cache)?;
        let dist = Categorical::new(policy_cache.output());
        let new_log_prob = dist.log_prob(s.action);
        let log_ratio = new_log_prob - s.old_log_prob;
        let ratio = log_ratio.exp();
        let surrogate = clipped_surrogate(ratio, s.advantage, cfg.clip_epsilon);
        let entropy = dist.entropy();
        out.surrogate -= surrogate / m;
        out.entropy += entropy / m;
        out.approx_kl -= log_ratio / m;
        if (ratio - 1.0).abs() > cfg.clip_epsilon {
            out.clip_fraction += 1.0 / m;
        }

        net.value.forward_cached(s.observation, &mut value_cache)?;
        let err = value_cache.output()[0] - s.return_target;
        out.value_loss += err * err / m;

        if let Some(g) = grads.as_mut() {
            let mut logit_grad = vec![0.0; dist.num_classes()];
            // The unclipped branch is the active one: its gradient flows.
            if ratio * s.advantage <= surrogate {
                let scale = -s.advantage * ratio / m;
                for (lg, d) in logit_grad.iter_mut().zip(dist.log_prob_grad(s.action)) {
                    *lg += scale * d;
                }
            }
            if cfg.entropy_coef != 0.0 {
                for (lg, d) in logit_grad.iter_mut().zip(dist.entropy_grad()) {
                    *lg -= cfg.entropy_coef * d / m;
                }
            }
            net.policy.backward(&mut policy_cache, &logit_grad, g.policy)?;
            let vg = [2.0 * cfg.value_coef * err / m];
            net.value.backward(&mut value_cache, &vg, g.value)?;
        }
    }
    out.loss = out.surrogate + cfg.value_coef * out.value_loss - cfg.entropy_coef * out.entropy;
    Ok(out)
}

/// Means over every minibatch of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoDiagnostics {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub explained_variance: Option<f64>,
}

fn normalize(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let denom = var.sqrt() + 1e-8;
    values.iter_mut().for_each(|v| *v = (*v - mean) / denom);
}

pub struct Ppo {
    cfg: PpoConfig,
    net: ActorCritic,
    policy_opt: AdamState,
    value_opt: AdamState,
    env_steps: u64,
    updates: u64,
}

impl Ppo {
    pub fn new(observation_dim: usize, num_actions: usize, cfg: PpoConfig, seed: u64) -> Result<Self, AlgoError> {
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

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn network(&self) -> &ActorCritic {
        &self.net
    }

    /// `epochs` passes of shuffled minibatches over a buffer whose returns
    /// and advantages are already computed.
    pub fn update(&mut self, buffer: &RolloutBuffer, rng: &mut ChaCha8Rng) -> Result<PpoDiagnostics, AlgoError> {
        let n = buffer.len();
        let mut diag = PpoDiagnostics {
            explained_variance: explained_variance(&buffer.returns, &buffer.values),
            ..Default::default()
        };
        if n == 0 {
            return Ok(diag);
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut policy_grads = self.net.policy.zero_grads();
        let mut value_grads = self.net.value.zero_grads();
        let mut minibatches = 0usize;
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch_size) {
                let mut advantages: Vec<f64> = chunk.iter().map(|&i| buffer.advantages[i]).collect();
                normalize(&mut advantages);
                let batch: Vec<PpoSample> = chunk
                    .iter()
                    .zip(&advantages)
                    .map(|(&i, &advantage)| PpoSample {
                        observation: &buffer.observations[i],
                        action: buffer.actions[i],
                        old_log_prob: buffer.log_probs[i],
                        advantage,
                        return_target: buffer.returns[i],
                    })
                    .collect();
                policy_grads.iter_mut().for_each(|g| *g = 0.0);
                value_grads.iter_mut().for_each(|g| *g = 0.0);
                let loss = ppo_loss(
                    &self.net,
                    &batch,
                    &self.cfg,
                    Some(PpoGrads {
                        policy: &mut policy_grads,
                        value: &mut value_grads,
                    }),
                )?;
                clip_global_norm(&mut policy_grads, self.cfg.max_grad_norm);
                clip_global_norm(&mut value_grads, self.cfg.max_grad_norm);
                self.policy_opt.step(self.net.policy.params_mut(), &policy_grads)?;
                self.value_opt.step(self.net.value.params_mut(), &value_grads)?;
                diag.surrogate += loss.surrogate;
                diag.value_loss += loss.value_loss;
                diag.entropy += loss.entropy;
                diag.approx_kl += loss.approx_kl;
                diag.clip_fraction += loss.clip_fraction;
                minibatches += 1;
            }
        }
        let k = minibatches as f64;
        diag.surrogate /= k;
        diag.value_loss /= k;
        diag.entropy /= k;
        diag.approx_kl /= k;
        diag.clip_fraction /= k;
        Ok(diag)
    }

    fn gae(&self) -> GaeParams {
        GaeParams {
            gamma: self.cfg.gamma,
            lambda: self.cfg.gae_lambda,
        }
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).unwrap_or(serde_json::Value::Null)
    }
}

impl Learner for Ppo {
    fn algorithm(&self) -> &'static str {
        "ppo"
    }

    fn learn(
        &mut self,
        envs: &mut VecEnv,
        total_steps: u64,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn TrainObserver,
    ) -> Result<(), AlgoError> {
        let steps_per_env = (self.cfg.rollout_length / envs.len()).max(1);
        let target = self.env_steps + total_steps;
        while self.env_steps < target {
            let (buffer, stats) =
                collect_rollout(&self.net, envs, steps_per_env, self.cfg.reward_scale, self.gae(), rng)?;
            self.env_steps += buffer.len() as u64;
            let diag = self.update(&buffer, rng)?;
            self.updates += 1;
            let metrics = UpdateMetrics {
                update_index: self.updates,
                env_steps: self.env_steps,
                mean_reward: Some(stats.mean_reward),
                value_loss: Some(diag.value_loss),
                approx_kl: Some(diag.approx_kl),
                explained_variance: diag.explained_variance,
                entropy: Some(diag.entropy),
                clip_fraction: Some(diag.clip_fraction),
            };
            observer.on_update(&metrics, &|| self.checkpoint())?;
        }
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn checkpoint(&self) -> Checkpoint {
        self.net.checkpoint(
            "ppo",
            self.config_json(),
            self.env_steps,
            Some((&self.policy_opt, &self.value_opt)),
        )
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(ActorCriticPolicy::new("ppo", self.net.clone(), self.config_json(), self.env_steps))
    }
}

pub(crate) struct PpoAlgorithm;

impl Algorithm for PpoAlgorithm {
    fn name(&self) -> &'static str {
        "ppo"
    }

    fn default_config(&self) -> serde_json::Value {
        serde_json::to_value(PpoConfig::default()).unwrap_or_default()
    }

    fn validate_config(&self, config: &serde_json::Value) -> Result<(), AlgoError> {
        parse_config::<PpoConfig>(config)?.validate()
    }

    fn learner(
        &self,
        observation_dim: usize,
        num_actions: usize,
        config: &serde_json::Value,
        seed: u64,
    ) -> Result<Box<dyn Learner>, AlgoError> {
        Ok(Box::new(Ppo::new(observation_dim, num_actions, parse_config(config)?, seed)?))
    }

    fn restore(&self, checkpoint: &Checkpoint) -> Result<Box<dyn Policy>, AlgoError> {
        let net = ActorCritic::from_checkpoint(checkpoint)?;
        Ok(Box::new(ActorCriticPolicy::new(
            "ppo",
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
    use crate::algos::{ActMode, MetricsLog};
    use crate::env::Environment;

    fn net(seed: u64) -> ActorCritic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ActorCritic::new(3, 4, &[8, 8], &mut rng).unwrap()
    }

    /// A sample whose ratio under `net` equals `ratio` exactly up to rounding.
    fn sample_with_ratio<'a>(net: &ActorCritic, obs: &'a [f64], ratio: f64, advantage: f64) -> PpoSample<'a> {
        let lp = net.distribution(obs).unwrap().log_prob(1);
        PpoSample {
            observation: obs,
            action: 1,
            old_log_prob: lp - ratio.ln(),
            advantage,
            return_target: 0.0,
        }
    }

    #[test]
    fn surrogate_hand_values() {
        assert_eq!(clipped_surrogate(1.3, 2.0, 0.2), 2.4);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_surrogate(1.0, 3.0, 0.2), 3.0);
    }

    #[test]
    fn loss_worked_examples() {
        let n = net(1);
        let obs = [0.1, -0.2, 0.3];
        let cfg = PpoConfig::default();
        let l = ppo_loss(&n, &[sample_with_ratio(&n, &obs, 1.3, 2.0)], &cfg, None).unwrap();
        assert!((l.surrogate + 2.4).abs() < 1e-12);
        let l = ppo_loss(&n, &[sample_with_ratio(&n, &obs, 0.5, -1.0)], &cfg, None).unwrap();
        assert!((l.surrogate - 0.8).abs() < 1e-12);

        let advs = [0.5, -1.5, 2.0];
        let batch: Vec<_> = advs.iter().map(|&a| sample_with_ratio(&n, &obs, 1.0, a)).collect();
        let l = ppo_loss(&n, &batch, &cfg, None).unwrap();
        assert!((l.surrogate + advs.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        assert_eq!(l.approx_kl, 0.0);
        assert_eq!(l.clip_fraction, 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut n = net(3);
        let cfg = PpoConfig {
            entropy_coef: 0.05,
            ..Default::default()
        };
        let obs = [[0.3, -0.1, 0.8], [-0.5, 0.2, 0.1], [0.0, 0.9, -0.4]];
        // Ratios strictly inside and outside the clip range, away from kinks.
        let spec = [(1.1, 1.5, 0.7), (1.4, 0.8, -0.3), (0.6, -0.9, 1.2)];
        let olds: Vec<f64> = obs
            .iter()
            .zip(&spec)
            .map(|(o, (r, _, _))| n.distribution(o).unwrap().log_prob(1) - f64::ln(*r))
            .collect();
        let batch = |olds: &[f64]| -> Vec<(usize, f64, f64, f64)> {
            (0..3).map(|i| (i, olds[i], spec[i].1, spec[i].2)).collect()
        };
        let eval = |n: &ActorCritic, grads: Option<PpoGrads>| {
            let b: Vec<PpoSample> = batch(&olds)
                .into_iter()
                .map(|(i, old, a, ret)| PpoSample {
                    observation: &obs[i],
                    action: 1,
                    old_log_prob: old,
                    advantage: a,
                    return_target: ret,
                })
                .collect();
            ppo_loss(n, &b, &cfg, grads).unwrap().loss
        };
        let mut gp = n.policy.zero_grads();
        let mut gv = n.value.zero_grads();
        eval(
            &n,
            Some(PpoGrads {
                policy: &mut gp,
                value: &mut gv,
            }),
        );
        let h = 1e-6;
        for idx in (0..n.policy.num_params()).step_by(7) {
            let orig = n.policy.params()[idx];
            n.policy.params_mut()[idx] = orig + h;
            let up = eval(&n, None);
            n.policy.params_mut()[idx] = orig - h;
            let down = eval(&n, None);
            n.policy.params_mut()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - gp[idx]).abs() <= 1e-6 + 1e-4 * fd.abs(), "policy {idx}: {fd} vs {}", gp[idx]);
        }
        for idx in (0..n.value.num_params()).step_by(5) {
            let orig = n.value.params()[idx];
            n.value.params_mut()[idx] = orig + h;
            let up = eval(&n, None);
            n.value.params_mut()[idx] = orig - h;
            let down = eval(&n, None);
            n.value.params_mut()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - gv[idx]).abs() <= 1e-6 + 1e-4 * fd.abs(), "value {idx}: {fd} vs {}", gv[idx]);
        }
    }

    fn bandit_envs() -> VecEnv {
        VecEnv::new(vec![Box::new(Bandit) as Box<dyn Environment>], 0).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let cfg = PpoConfig {
            learning_rate: 0.0,
            rollout_length: 64,
            minibatch_size: 16,
            ..Default::default()
        };
        let mut ppo = Ppo::new(1, 2, cfg, 4).unwrap();
        let before = ppo.network().clone();
        let mut envs = bandit_envs();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut log = MetricsLog::default();
        ppo.learn(&mut envs, 64, &mut rng, &mut log).unwrap();
        assert_eq!(ppo.network(), &before);
        assert_eq!(log.rows.len(), 1);
        assert_eq!(log.rows[0].approx_kl, Some(0.0));
    }

    #[test]
    fn update_is_deterministic() {
        let run = || {
            let cfg = PpoConfig {
                rollout_length: 128,
                minibatch_size: 32,
                ..Default::default()
            };
            let mut ppo = Ppo::new(1, 2, cfg, 8).unwrap();
            let mut envs = bandit_envs();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            ppo.learn(&mut envs, 128, &mut rng, &mut MetricsLog::default()).unwrap();
            ppo.network().clone()
        };
        let (a, b) = (run(), run());
        assert!(a.policy.params().iter().zip(b.policy.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn restored_policy_acts_like_learner() {
        let ppo = Ppo::new(3, 5, PpoConfig::default(), 2).unwrap();
        let ckpt = Checkpoint::from_json(&ppo.checkpoint().to_json().unwrap()).unwrap();
        let mut restored = PpoAlgorithm.restore(&ckpt).unwrap();
        let mut original = ppo.policy();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..50 {
            let obs = [i as f64 * 0.1, -0.3, 1.0];
            assert_eq!(
                restored.act(&obs, ActMode::Greedy, &mut rng).unwrap(),
                original.act(&obs, ActMode::Greedy, &mut rng).unwrap()
            );
        }
    }
}
