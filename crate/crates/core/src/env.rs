//! Episodic MDP around the market model, plus the generic environment trait
//! the learners are written against.

use crate::market::{self, MarketError, MarketParams, MarketState, ProfitBreakdown, ProfitNoise};
use crate::randomization::{sample_params, RandomizationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Length of the observed timestep cycle.
pub const TIMESTEP_CYCLE: u64 = 100;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("step called before reset")]
    NotReset,
    #[error("episode already truncated after {0} steps; call reset")]
    EpisodeOver(u64),
    #[error("action index {index} out of range for {n} actions")]
    ActionIndex { index: usize, n: usize },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("trace output failed: {0}")]
    Trace(#[from] csv::Error),
}

/// One transition as seen by a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Minimal discrete-action environment interface.
pub trait Environment: Send {
    fn observation_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError>;
    fn step(&mut self, action: usize) -> Result<Transition, EnvError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default)]
    pub params: MarketParams,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub observation_scaling: bool,
    /// Resampled at every reset when present.
    #[serde(default)]
    pub randomization: Option<RandomizationSpec>,
}

fn default_horizon() -> u64 {
    1000
}

fn default_true() -> bool {
    true
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            params: MarketParams::default(),
            horizon: default_horizon(),
            seed: 0,
            observation_scaling: true,
            randomization: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.horizon < 1 {
            return Err(EnvError::Config("horizon must be at least 1".into()));
        }
        self.params.validate()?;
        if let Some(spec) = &self.randomization {
            spec.validate().map_err(|e| EnvError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        5 + self.params.n_competitors
    }
}

/// Market trend from the change in total production.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Progress {
    Down = 0,
    Equal = 1,
    Up = 2,
}

impl Progress {
    pub fn from_change(previous: f64, current: f64) -> Self {
        match current.partial_cmp(&previous) {
            Some(std::cmp::Ordering::Greater) => Progress::Up,
            Some(std::cmp::Ordering::Less) => Progress::Down,
            _ => Progress::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub total_supply: f64,
    pub total_demand: f64,
    pub progress: Progress,
    pub timestep_mod: u32,
    /// Competitor quantities as they stood before the latest step.
    pub competitor_q_prev: Vec<f64>,
    pub price: f64,
}

impl Observation {
    /// Flattens to `[supply, demand, progress, timestep_mod, competitors.., price]`.
    ///
    /// With `scaling` on each field is divided by a static bound: supply by
    /// `base_demand`, demand by its seasonal peak `base_demand * (1 +
    /// demand_amplitude)`, progress by 2, timestep by the cycle length,
    /// competitor quantities by `q_max` and price by `p_max`.
    pub fn encode(&self, params: &MarketParams, scaling: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(5 + self.competitor_q_prev.len());
        if scaling {
            let demand_peak = (params.base_demand * (1.0 + params.demand_amplitude)).max(1e-12);
            let base = params.base_demand.max(1e-12);
            let q_max = params.q_max as f64;
            out.push(self.total_supply / base);
            out.push(self.total_demand / demand_peak);
            out.push(self.progress as u8 as f64 / 2.0);
            out.push(self.timestep_mod as f64 / TIMESTEP_CYCLE as f64);
            out.extend(self.competitor_q_prev.iter().map(|q| q / q_max));
            out.push(self.price / params.p_max);
        } else {
            out.push(self.total_supply);
            out.push(self.total_demand);
            out.push(self.progress as u8 as f64);
            out.push(self.timestep_mod as f64);
            out.extend(self.competitor_q_prev.iter().copied());
            out.push(self.price);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub units: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    /// Always equal to `breakdown.profit`.
    pub reward: f64,
    pub truncated: bool,
    pub breakdown: ProfitBreakdown,
    /// Timestep at which the step was played.
    pub t: u64,
    /// Price the units were sold at (before this step's price update).
    pub price_paid: f64,
    pub total_supply: f64,
    pub total_demand: f64,
}

/// The market as an episodic MDP with a fixed horizon and no terminal states.
#[derive(Debug, Clone)]
pub struct MarketEnv {
    config: EnvConfig,
    params: MarketParams,
    rng: ChaCha8Rng,
    state: Option<MarketState>,
    observation: Option<Observation>,
}

impl MarketEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let params = config.params.clone();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            params,
            rng,
            state: None,
            observation: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Parameters of the current episode (resampled under randomization).
    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn state(&self) -> Option<&MarketState> {
        self.state.as_ref()
    }

    pub fn observation(&self) -> Option<&Observation> {
        self.observation.as_ref()
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(spec) = &self.config.randomization {
            self.params = sample_params(spec, &self.config.params, &mut self.rng)
                .map_err(|e| EnvError::Config(e.to_string()))?;
        }
        let p = &self.params;
        let competitor_q: Vec<u32> = (0..p.n_competitors)
            .map(|_| self.rng.random_range(p.q_min..=p.q_max))
            .collect();
        let fixed_cost_base = market::draw_fixed_cost(p, &mut self.rng);
        let last_agent_q = (p.q_min + p.q_max) / 2;
        let total_supply = competitor_q.iter().map(|&q| q as f64).sum::<f64>() + last_agent_q as f64;
        let total_demand = market::demand_at(p.p_init, 0, p, 0.0)?;
        let obs = Observation {
            total_supply,
            total_demand,
            progress: Progress::Equal,
            timestep_mod: 0,
            competitor_q_prev: competitor_q.iter().map(|&q| q as f64).collect(),
            price: p.p_init,
        };
        self.state = Some(MarketState {
            price: p.p_init,
            competitor_q,
            t: 0,
            fixed_cost_base,
            last_agent_q,
            last_total_supply: total_supply,
            last_total_demand: total_demand,
        });
        self.observation = Some(obs.clone());
        Ok(obs)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        let p = &self.params;
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if state.t >= self.config.horizon {
            return Err(EnvError::EpisodeOver(state.t));
        }
        p.check_quantity(action.units)?;
        let q = action.units;
        let rng = &mut self.rng;

        let previous_competitors: Vec<f64> = state.competitor_q.iter().map(|&c| c as f64).collect();
        let competitors = market::competitor_update(state, q, p, rng)?;
        let total_supply = q as f64 + competitors.iter().map(|&c| c as f64).sum::<f64>();

        let demand_noise: f64 = rng.sample(StandardNormal);
        let total_demand = market::demand_at(state.price, state.t, p, demand_noise)?;

        let noise = ProfitNoise {
            production: rng.sample(StandardNormal),
            fixed_cost: rng.sample(StandardNormal),
            brand: rng.sample(StandardNormal),
        };
        let breakdown = market::profit(q, state, total_demand, p, noise)?;

        let price_noise: f64 = rng.sample(StandardNormal);
        let price_paid = state.price;
        let new_price = market::price_update(state.price, total_supply, total_demand, p, price_noise);

        let progress = Progress::from_change(state.last_total_supply, total_supply);
        let t = state.t;
        state.competitor_q = competitors;
        state.price = new_price;
        state.t += 1;
        state.last_agent_q = q;
        state.last_total_supply = total_supply;
        state.last_total_demand = total_demand;

        let observation = Observation {
            total_supply,
            total_demand,
            progress,
            timestep_mod: (state.t % TIMESTEP_CYCLE) as u32,
            competitor_q_prev: previous_competitors,
            price: new_price,
        };
        self.observation = Some(observation.clone());
        Ok(StepResult {
            observation,
            reward: breakdown.profit,
            truncated: state.t == self.config.horizon,
            breakdown,
            t,
            price_paid,
            total_supply,
            total_demand,
        })
    }

    pub fn encode(&self, obs: &Observation) -> Vec<f64> {
        obs.encode(&self.params, self.config.observation_scaling)
    }

    pub fn action_from_index(&self, index: usize) -> Result<Action, EnvError> {
        let n = self.params.num_actions();
        if index >= n {
            return Err(EnvError::ActionIndex { index, n });
        }
        Ok(Action {
            units: self.params.q_min + index as u32,
        })
    }
}

impl Environment for MarketEnv {
    fn observation_dim(&self) -> usize {
        5 + self.params.n_competitors
    }

    fn num_actions(&self) -> usize {
        self.params.num_actions()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        let obs = MarketEnv::reset(self, seed)?;
        Ok(self.encode(&obs))
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        let action = self.action_from_index(action)?;
        let result = MarketEnv::step(self, action)?;
        Ok(Transition {
            observation: self.encode(&result.observation),
            reward: result.reward,
            terminated: false,
            truncated: result.truncated,
        })
    }
}

/// One row of the per-step trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub action: u32,
    pub supply: f64,
    pub demand: f64,
    pub price: f64,
    pub reward: f64,
    pub revenue: f64,
    pub brand_bonus: f64,
    pub subsidy: f64,
    pub fixed_cost_paid: f64,
    pub production_cost: f64,
    pub storage_penalty: f64,
}

impl TraceRow {
    pub fn new(action: Action, step: &StepResult) -> Self {
        let b = &step.breakdown;
        Self {
            t: step.t,
            action: action.units,
            supply: step.total_supply,
            demand: step.total_demand,
            price: step.price_paid,
            reward: step.reward,
            revenue: b.revenue,
            brand_bonus: b.brand_bonus,
            subsidy: b.subsidy,
            fixed_cost_paid: b.fixed_cost_paid,
            production_cost: b.production_cost,
            storage_penalty: b.storage_penalty,
        }
    }
}

/// CSV sink for [`TraceRow`]s. The header row is written even when no rows
/// follow.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(writer: W) -> Result<Self, EnvError> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        inner.write_record([
            "t",
            "action",
            "supply",
            "demand",
            "price",
            "reward",
            "revenue",
            "brand_bonus",
            "subsidy",
            "fixed_cost_paid",
            "production_cost",
            "storage_penalty",
        ])?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &TraceRow) -> Result<(), EnvError> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, EnvError> {
        self.inner.flush().map_err(csv::Error::from)?;
        self.inner
            .into_inner()
            .map_err(|e| EnvError::Trace(csv::Error::from(e.into_error())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config(horizon: u64) -> EnvConfig {
        let mut cfg = EnvConfig {
            horizon,
            ..Default::default()
        };
        cfg.params.production_noise = 0.0;
        cfg
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut env = MarketEnv::new(EnvConfig::default()).unwrap();
        let a = env.reset(42).unwrap();
        let b = env.reset(42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.price, 15.0);
        assert_eq!(a.progress, Progress::Equal);
        assert_eq!(a.timestep_mod, 0);
    }

    #[test]
    fn different_seeds_draw_different_competitors() {
        let mut env = MarketEnv::new(EnvConfig::default()).unwrap();
        let differing = (0..100u64)
            .filter(|&i| {
                let a = env.reset(2 * i).unwrap().competitor_q_prev;
                let b = env.reset(2 * i + 1).unwrap().competitor_q_prev;
                a != b
            })
            .count();
        assert!(differing >= 95, "{differing}");
    }

    #[test]
    fn horizon_is_enforced() {
        let mut env = MarketEnv::new(quiet_config(5)).unwrap();
        assert!(matches!(env.step(Action { units: 3 }), Err(EnvError::NotReset)));
        env.reset(1).unwrap();
        for i in 0..5 {
            let r = env.step(Action { units: 3 }).unwrap();
            assert_eq!(r.truncated, i == 4);
        }
        assert!(matches!(env.step(Action { units: 3 }), Err(EnvError::EpisodeOver(5))));
    }

    #[test]
    fn out_of_range_action_rejected() {
        let mut env = MarketEnv::new(EnvConfig::default()).unwrap();
        env.reset(0).unwrap();
        assert!(matches!(
            env.step(Action { units: 15 }),
            Err(EnvError::Market(MarketError::QuantityOutOfRange { .. }))
        ));
        assert!(matches!(
            Environment::step(&mut env, 15),
            Err(EnvError::ActionIndex { index: 15, n: 15 })
        ));
    }

    #[test]
    fn idle_producer_pays_only_fixed_cost() {
        let mut env = MarketEnv::new(quiet_config(300)).unwrap();
        env.reset(9).unwrap();
        let fixed = env.state().unwrap().fixed_cost_base;
        for _ in 0..300 {
            let r = env.step(Action { units: 0 }).unwrap();
            assert_eq!(r.reward, -fixed);
            assert_eq!(r.reward, r.breakdown.profit);
        }
    }

    #[test]
    fn observation_reports_previous_competitors() {
        let mut env = MarketEnv::new(EnvConfig::default()).unwrap();
        env.reset(5).unwrap();
        for _ in 0..50 {
            let before: Vec<f64> = env
                .state()
                .unwrap()
                .competitor_q
                .iter()
                .map(|&q| q as f64)
                .collect();
            let r = env.step(Action { units: 6 }).unwrap();
            assert_eq!(r.observation.competitor_q_prev, before);
            assert_eq!(r.observation.timestep_mod as u64, (r.t + 1) % 100);
        }
    }

    #[test]
    fn encoded_length_and_progress_mapping() {
        let mut env = MarketEnv::new(EnvConfig::default()).unwrap();
        let obs = env.reset(0).unwrap();
        let v = env.encode(&obs);
        assert_eq!(v.len(), 8);
        assert_eq!(obs.encode(env.params(), false)[2], 1.0);
        assert_eq!(Progress::from_change(10.0, 10.0), Progress::Equal);
        assert_eq!(Progress::from_change(10.0, 11.0), Progress::Up);
        assert_eq!(Progress::from_change(10.0, 9.0), Progress::Down);
    }

    #[test]
    fn trace_writer_emits_header() {
        let w = TraceWriter::new(Vec::new()).unwrap();
        let bytes = w.finish().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text.trim_end(),
            "t,action,supply,demand,price,reward,revenue,brand_bonus,subsidy,fixed_cost_paid,production_cost,storage_penalty"
        );
    }
}
