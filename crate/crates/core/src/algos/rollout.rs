use crate::env::{EnvError, Environment};
use crate::seeding::episode_seed;

/// Result of stepping one slot of a [`VecEnv`].
#[derive(Debug, Clone)]
pub struct SlotStep {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// Last observation of a finished episode (before the automatic reset).
    pub final_observation: Option<Vec<f64>>,
    /// Undiscounted return of the episode that just finished.
    pub episode_return: Option<f64>,
}

/// Independent environments stepped in lockstep, each reset automatically
/// with its own derived seed when an episode ends.
pub struct VecEnv {
    envs: Vec<Box<dyn Environment>>,
    observations: Vec<Vec<f64>>,
    episodes: Vec<u64>,
    running_returns: Vec<f64>,
    base_seed: u64,
}

impl VecEnv {
    pub fn new(mut envs: Vec<Box<dyn Environment>>, base_seed: u64) -> Result<Self, EnvError> {
        if envs.is_empty() {
            return Err(EnvError::Config("at least one environment is required".into()));
        }
        let (dim, n) = (envs[0].observation_dim(), envs[0].num_actions());
        if envs.iter().any(|e| e.observation_dim() != dim || e.num_actions() != n) {
            return Err(EnvError::Config("environments disagree on spaces".into()));
        }
        let observations = envs
            .iter_mut()
            .enumerate()
            .map(|(i, env)| env.reset(episode_seed(base_seed, i, 0)))
            .collect::<Result<Vec<_>, _>>()?;
        let count = envs.len();
        Ok(Self {
            envs,
            observations,
            episodes: vec![0; count],
            running_returns: vec![0.0; count],
            base_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn observation_dim(&self) -> usize {
        self.envs[0].observation_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.envs[0].num_actions()
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<Vec<SlotStep>, EnvError> {
        if actions.len() != self.envs.len() {
            return Err(EnvError::Config(format!(
                "{} actions for {} environments",
                actions.len(),
                self.envs.len()
            )));
        }
        let mut out = Vec::with_capacity(actions.len());
        for (i, (env, &action)) in self.envs.iter_mut().zip(actions).enumerate() {
            let tr = env.step(action)?;
            self.running_returns[i] += tr.reward;
            let (final_observation, episode_return) = if tr.terminated || tr.truncated {
                self.episodes[i] += 1;
                self.observations[i] = env.reset(episode_seed(self.base_seed, i, self.episodes[i]))?;
                let ret = std::mem::take(&mut self.running_returns[i]);
                (Some(tr.observation), Some(ret))
            } else {
                self.observations[i] = tr.observation;
                (None, None)
            };
            out.push(SlotStep {
                reward: tr.reward,
                terminated: tr.terminated,
                truncated: tr.truncated,
                final_observation,
                episode_return,
            });
        }
        Ok(out)
    }
}

/// GAE hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeParams {
    pub gamma: f64,
    pub lambda: f64,
}

/// On-policy trajectory storage, time-major over `n_envs` parallel slots:
/// entry `t * n_envs + e` is step `t` of environment `e`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Value of the final observation where an episode was truncated.
    pub bootstrap_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// One stored step.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub value: f64,
    pub log_prob: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize) -> Self {
        Self {
            n_envs,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        let n_envs = self.n_envs;
        *self = Self::new(n_envs);
    }

    pub fn push(&mut self, step: RolloutStep) {
        self.observations.push(step.observation);
        self.actions.push(step.action);
        self.rewards.push(step.reward);
        self.values.push(step.value);
        self.log_probs.push(step.log_prob);
        self.terminated.push(step.terminated);
        self.truncated.push(step.truncated);
        self.bootstrap_values.push(step.bootstrap_value);
    }

    /// Fills `advantages` (GAE) and `returns = advantages + values`.
    ///
    /// `last_values[e]` bootstraps the step after the buffer's end. Terminal
    /// steps bootstrap from zero, truncated steps from their stored final
    /// observation value; neither carries the GAE trace across the boundary.
    pub fn compute_returns_and_gae(&mut self, last_values: &[f64], gae: GaeParams) {
        let n = self.len();
        let n_envs = self.n_envs.max(1);
        assert_eq!(n % n_envs, 0, "buffer holds a partial row");
        assert_eq!(last_values.len(), n_envs, "one bootstrap value per environment");
        let steps = n / n_envs;
        self.advantages = vec![0.0; n];
        for (e, &last_value) in last_values.iter().enumerate() {
            let mut running = 0.0;
            for t in (0..steps).rev() {
                let i = t * n_envs + e;
                let ended = self.terminated[i] || self.truncated[i];
                let next_value = if self.terminated[i] {
                    0.0
                } else if self.truncated[i] {
                    self.bootstrap_values[i]
                } else if t + 1 == steps {
                    last_value
                } else {
                    self.values[i + n_envs]
                };
                let delta = self.rewards[i] + gae.gamma * next_value - self.values[i];
                let carry = if ended || t + 1 == steps { 0.0 } else { running };
                running = delta + gae.gamma * gae.lambda * carry;
                self.advantages[i] = running;
            }
        }
        self.returns = self
            .advantages
            .iter()
            .zip(&self.values)
            .map(|(a, v)| a + v)
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn buffer(rewards: &[f64], values: &[f64]) -> RolloutBuffer {
        let mut b = RolloutBuffer::new(1);
        for (&r, &v) in rewards.iter().zip(values) {
            b.push(RolloutStep {
                observation: vec![],
                action: 0,
                reward: r,
                value: v,
                log_prob: 0.0,
                terminated: false,
                truncated: false,
                bootstrap_value: 0.0,
            });
        }
        b
    }

    #[test]
    fn monte_carlo_limit() {
        let rewards = [1.0, -2.0, 0.5, 3.0];
        let mut b = buffer(&rewards, &[0.0; 4]);
        b.compute_returns_and_gae(&[0.0], GaeParams { gamma: 1.0, lambda: 1.0 });
        let suffix: Vec<f64> = (0..4).map(|t| rewards[t..].iter().sum()).collect();
        assert_eq!(b.advantages, suffix);
    }

    #[test]
    fn single_step_bootstrap() {
        let mut b = buffer(&[1.0], &[0.0]);
        b.compute_returns_and_gae(&[2.0], GaeParams { gamma: 0.5, lambda: 1.0 });
        assert_eq!(b.advantages, vec![2.0]);
        assert_eq!(b.returns, vec![2.0]);
    }

    #[test]
    fn zero_rewards_zero_advantages() {
        let mut b = buffer(&[0.0; 6], &[0.0; 6]);
        b.compute_returns_and_gae(&[0.0], GaeParams { gamma: 0.99, lambda: 0.95 });
        assert!(b.advantages.iter().all(|&a| a == 0.0));
    }

    /// Direct-summation oracles for the two GAE limits.
    #[test]
    fn lambda_limits_match_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100;
        let gamma = 0.97;
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let last = 0.3;
        let next = |t: usize| if t + 1 == n { last } else { values[t + 1] };

        let mut b = buffer(&rewards, &values);
        b.compute_returns_and_gae(&[last], GaeParams { gamma, lambda: 0.0 });
        for t in 0..n {
            let td = rewards[t] + gamma * next(t) - values[t];
            assert!((b.advantages[t] - td).abs() < 1e-10);
        }

        b.compute_returns_and_gae(&[last], GaeParams { gamma, lambda: 1.0 });
        for t in 0..n {
            let mut g = gamma.powi((n - t) as i32) * last;
            for k in t..n {
                g += gamma.powi((k - t) as i32) * rewards[k];
            }
            assert!((b.advantages[t] - (g - values[t])).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_bootstraps_without_carrying_trace() {
        let mut b = buffer(&[1.0, 1.0, 1.0], &[0.5, 0.5, 0.5]);
        b.truncated[1] = true;
        b.bootstrap_values[1] = 4.0;
        b.compute_returns_and_gae(&[2.0], GaeParams { gamma: 0.5, lambda: 1.0 });
        // Step 2 starts a fresh episode.
        assert_eq!(b.advantages[2], 1.0 + 0.5 * 2.0 - 0.5);
        assert_eq!(b.advantages[1], 1.0 + 0.5 * 4.0 - 0.5);
        let delta0 = 1.0 + 0.5 * 0.5 - 0.5;
        assert_eq!(b.advantages[0], delta0 + 0.5 * b.advantages[1]);
    }

    #[test]
    fn interleaved_envs_are_independent() {
        let mut b = RolloutBuffer::new(2);
        for t in 0..3 {
            for e in 0..2 {
                b.push(RolloutStep {
                    observation: vec![],
                    action: 0,
                    reward: if e == 0 { 1.0 } else { t as f64 },
                    value: 0.0,
                    log_prob: 0.0,
                    terminated: false,
                    truncated: false,
                    bootstrap_value: 0.0,
                });
            }
        }
        b.compute_returns_and_gae(&[0.0, 10.0], GaeParams { gamma: 1.0, lambda: 1.0 });
        assert_eq!(b.advantages, vec![3.0, 13.0, 2.0, 13.0, 1.0, 12.0]);
    }
}
