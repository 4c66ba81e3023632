//! Small environments with known optimal behaviour, used to check learners.

use crate::env::{EnvError, Environment, Transition};

/// Two arms, constant observation `[1.0]`; arm 0 pays 1, arm 1 pays 0.
/// Every step terminates the episode.
#[derive(Debug, Clone, Default)]
pub struct Bandit;

impl Environment for Bandit {
    fn observation_dim(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>, EnvError> {
        Ok(vec![1.0])
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if action >= 2 {
            return Err(EnvError::ActionIndex { index: action, n: 2 });
        }
        Ok(Transition {
            observation: vec![1.0],
            reward: if action == 0 { 1.0 } else { 0.0 },
            terminated: true,
            truncated: false,
        })
    }
}

/// Deterministic chain `s0 -> s1 -> s2`. Action 0 stays, action 1 advances
/// (s2 advances onto itself). Reward 1 for every step taken from s2.
/// Observations are one-hot; episodes are truncated after `horizon` steps.
#[derive(Debug, Clone)]
pub struct Chain {
    state: usize,
    t: usize,
    horizon: usize,
}

impl Chain {
    pub const STATES: usize = 3;

    pub fn new(horizon: usize) -> Self {
        Self {
            state: 0,
            t: 0,
            horizon: horizon.max(1),
        }
    }

    pub fn one_hot(state: usize) -> Vec<f64> {
        let mut v = vec![0.0; Self::STATES];
        v[state] = 1.0;
        v
    }

    /// `(next_state, reward)` for a state-action pair.
    pub fn transition(state: usize, action: usize) -> (usize, f64) {
        let reward = if state == Self::STATES - 1 { 1.0 } else { 0.0 };
        let next = if action == 1 {
            (state + 1).min(Self::STATES - 1)
        } else {
            state
        };
        (next, reward)
    }
}

impl Environment for Chain {
    fn observation_dim(&self) -> usize {
        Self::STATES
    }

    fn num_actions(&self) -> usize {
        2
    }

    /// Starts in a state chosen by the seed so every state gets visited.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        self.state = (seed % Self::STATES as u64) as usize;
        self.t = 0;
        Ok(Self::one_hot(self.state))
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if action >= 2 {
            return Err(EnvError::ActionIndex { index: action, n: 2 });
        }
        let (next, reward) = Self::transition(self.state, action);
        self.state = next;
        self.t += 1;
        Ok(Transition {
            observation: Self::one_hot(next),
            reward,
            terminated: false,
            truncated: self.t >= self.horizon,
        })
    }
}
