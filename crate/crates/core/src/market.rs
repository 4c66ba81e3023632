//! Market dynamics for a single-asset economy with one learning producer and
//! a handful of scripted competitors.
//!
//! Every function here is pure. Stochastic terms enter either as pre-drawn
//! standard-normal variates (`noise` arguments) or through an explicit
//! random source, so the whole model collapses to closed-form arithmetic when
//! the variates are zero.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("quantity {q} outside production range [{min}, {max}]")]
    QuantityOutOfRange { q: u32, min: u32, max: u32 },
    #[error("seasonal period must be positive")]
    NonPositivePeriod,
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
}

/// Full parameterization of the economy.
///
/// The first sixteen fields are the sample economy's published values; the
/// remaining ones (`demand_period` onwards) are modelling constants that shape
/// the seasonal and price dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub q_min: u32,
    pub q_max: u32,
    pub n_competitors: usize,
    pub p_init: f64,
    pub fixed_cost_min: f64,
    pub fixed_cost_max: f64,
    /// Cubic production-cost coefficients `c0..c3`.
    pub cost_coefs: [f64; 4],
    pub elasticity: f64,
    pub base_demand: f64,
    /// Standard-deviation scale shared by every Gaussian perturbation.
    pub production_noise: f64,
    pub storage_factor: f64,
    pub max_brand_effect: f64,
    pub max_subsidy: f64,
    pub demand_period: u32,
    pub supply_period: u32,
    pub demand_amplitude: f64,
    pub supply_amplitude: f64,
    /// Gain of the multiplicative price update.
    pub price_sensitivity: f64,
    /// Quadratic demand penalty applied to prices above `p_init`.
    pub quad_demand_coef: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub storage_exponent_cap: u32,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            q_min: 0,
            q_max: 14,
            n_competitors: 3,
            p_init: 15.0,
            fixed_cost_min: 1.0,
            fixed_cost_max: 10.0,
            cost_coefs: [0.0, 4.0, -0.6, 0.03],
            elasticity: 1.02,
            base_demand: 43.4,
            production_noise: 0.05,
            storage_factor: 2.0,
            max_brand_effect: 0.3,
            max_subsidy: 10.0,
            demand_period: 200,
            supply_period: 200,
            demand_amplitude: 1.0,
            supply_amplitude: 0.1,
            price_sensitivity: 1.0,
            quad_demand_coef: 0.5,
            p_min: 1.0,
            p_max: 60.0,
            storage_exponent_cap: 10,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        let fail = |msg: &str| Err(MarketError::InvalidParams(msg.to_string()));
        let finite = [
            self.p_init,
            self.fixed_cost_min,
            self.fixed_cost_max,
            self.elasticity,
            self.base_demand,
            self.production_noise,
            self.storage_factor,
            self.max_brand_effect,
            self.max_subsidy,
            self.demand_amplitude,
            self.supply_amplitude,
            self.price_sensitivity,
            self.quad_demand_coef,
            self.p_min,
            self.p_max,
        ];
        if finite.iter().chain(self.cost_coefs.iter()).any(|v| !v.is_finite()) {
            return fail("all real-valued parameters must be finite");
        }
        if self.q_min > self.q_max {
            return fail("q_min must not exceed q_max");
        }
        if self.q_max == 0 {
            return fail("q_max must be positive");
        }
        if self.n_competitors < 1 {
            return fail("at least one competitor is required");
        }
        if self.fixed_cost_min > self.fixed_cost_max {
            return fail("fixed_cost_min must not exceed fixed_cost_max");
        }
        if !(self.p_min <= self.p_init && self.p_init <= self.p_max) {
            return fail("p_init must lie in [p_min, p_max]");
        }
        if self.p_min < 0.0 {
            return fail("p_min must be non-negative");
        }
        if self.production_noise < 0.0
            || self.demand_amplitude < 0.0
            || self.supply_amplitude < 0.0
        {
            return fail("noise scales and amplitudes must be non-negative");
        }
        if self.demand_period == 0 || self.supply_period == 0 {
            return fail("seasonal periods must be positive");
        }
        if self.storage_factor <= 1.0 {
            return fail("storage_factor must exceed 1");
        }
        if !(0.0..1.0).contains(&self.max_brand_effect) {
            return fail("max_brand_effect must lie in [0, 1)");
        }
        if self.base_demand < 0.0 || self.max_subsidy < 0.0 || self.elasticity < 0.0 {
            return fail("base_demand, max_subsidy and elasticity must be non-negative");
        }
        if self.quad_demand_coef < 0.0 || self.price_sensitivity < 0.0 {
            return fail("quad_demand_coef and price_sensitivity must be non-negative");
        }
        Ok(())
    }

    /// Number of discrete production choices, `q_max - q_min + 1`.
    pub fn num_actions(&self) -> usize {
        (self.q_max - self.q_min) as usize + 1
    }

    pub fn check_quantity(&self, q: u32) -> Result<(), MarketError> {
        if q < self.q_min || q > self.q_max {
            return Err(MarketError::QuantityOutOfRange {
                q,
                min: self.q_min,
                max: self.q_max,
            });
        }
        Ok(())
    }
}

/// Evolving market variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub price: f64,
    pub competitor_q: Vec<u32>,
    pub t: u64,
    pub fixed_cost_base: f64,
    pub last_agent_q: u32,
    pub last_total_supply: f64,
    pub last_total_demand: f64,
}

/// Signed components of one step's profit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitBreakdown {
    pub revenue: f64,
    pub brand_bonus: f64,
    pub subsidy: f64,
    pub fixed_cost_paid: f64,
    pub production_cost: f64,
    pub storage_penalty: f64,
    pub profit: f64,
}

/// Pre-drawn standard-normal variates consumed by [`profit`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProfitNoise {
    pub production: f64,
    pub fixed_cost: f64,
    pub brand: f64,
}

pub fn cubic_cost(q: u32, params: &MarketParams) -> Result<f64, MarketError> {
    params.check_quantity(q)?;
    let x = q as f64;
    let [c0, c1, c2, c3] = params.cost_coefs;
    Ok((c0 + x * (c1 + x * (c2 + x * c3))).max(0.0))
}

pub fn seasonal_factor(t: u64, period: u32, amplitude: f64) -> Result<f64, MarketError> {
    if period == 0 {
        return Err(MarketError::NonPositivePeriod);
    }
    // Reduce first so large t keeps full phase precision.
    let phase = (t % period as u64) as f64 / period as f64;
    Ok(1.0 + amplitude * (2.0 * PI * phase).sin())
}

/// Seasonal base demand minus linear and above-reference quadratic price
/// terms, floored at zero.
pub fn demand_at(price: f64, t: u64, params: &MarketParams, noise: f64) -> Result<f64, MarketError> {
    let season = seasonal_factor(t, params.demand_period, params.demand_amplitude)?;
    let over = (price - params.p_init).max(0.0);
    let d = params.base_demand * season + params.production_noise * params.base_demand * noise
        - params.elasticity * price
        - params.quad_demand_coef * over * over;
    Ok(d.max(0.0))
}

/// Competitor random walk with the walk steps supplied explicitly.
///
/// Each competitor moves by its walk step and drifts one unit against the
/// direction of the agent's production change.
pub fn competitor_update_with(
    competitor_q: &[u32],
    agent_q: u32,
    last_agent_q: u32,
    walk: &[i32],
    params: &MarketParams,
) -> Result<Vec<u32>, MarketError> {
    params.check_quantity(agent_q)?;
    if walk.len() != competitor_q.len() {
        return Err(MarketError::InvalidParams(format!(
            "walk has {} steps for {} competitors",
            walk.len(),
            competitor_q.len()
        )));
    }
    let drift = -((agent_q as i64 - last_agent_q as i64).signum());
    Ok(competitor_q
        .iter()
        .zip(walk)
        .map(|(&q, &u)| {
            (q as i64 + u as i64 + drift).clamp(params.q_min as i64, params.q_max as i64) as u32
        })
        .collect())
}

/// Competitor random walk drawing each step uniformly from `{-1, 0, 1}`.
pub fn competitor_update<R: Rng + ?Sized>(
    state: &MarketState,
    agent_q: u32,
    params: &MarketParams,
    rng: &mut R,
) -> Result<Vec<u32>, MarketError> {
    let walk: Vec<i32> = (0..state.competitor_q.len())
        .map(|_| rng.random_range(-1..=1))
        .collect();
    competitor_update_with(&state.competitor_q, agent_q, state.last_agent_q, &walk, params)
}

pub fn production_cost(q: u32, t: u64, params: &MarketParams, noise: f64) -> Result<f64, MarketError> {
    let base = cubic_cost(q, params)?;
    let season = seasonal_factor(t, params.supply_period, params.supply_amplitude)?;
    Ok((base * season * (1.0 + params.production_noise * noise)).max(0.0))
}

/// Exponential penalty on production in excess of demand; zero at zero excess.
pub fn storage_penalty(q: u32, demand: f64, params: &MarketParams) -> f64 {
    let excess = q as f64 - demand.max(0.0);
    if excess <= 0.0 {
        return 0.0;
    }
    let exponent = excess.min(params.storage_exponent_cap as f64);
    params.storage_factor.powf(exponent) - 1.0
}

pub fn price_update(price: f64, supply: f64, demand: f64, params: &MarketParams, noise: f64) -> f64 {
    let scale = demand.max(supply).max(1.0);
    let factor = 1.0
        + params.price_sensitivity * (demand - supply) / scale
        + params.production_noise * noise;
    (price * factor).clamp(params.p_min, params.p_max)
}

pub fn brand_bonus(q: u32, price: f64, params: &MarketParams, noise: f64) -> Result<f64, MarketError> {
    params.check_quantity(q)?;
    let share = q as f64 / params.q_max as f64;
    let bonus = price
        * q as f64
        * params.max_brand_effect
        * share
        * (1.0 + params.production_noise * noise);
    Ok(bonus.max(0.0))
}

pub fn subsidy(q: u32, params: &MarketParams) -> Result<f64, MarketError> {
    params.check_quantity(q)?;
    Ok(params.max_subsidy * q as f64 / params.q_max as f64)
}

/// Assembles one step's profit at the state's current price and timestep.
pub fn profit(
    q: u32,
    state: &MarketState,
    demand: f64,
    params: &MarketParams,
    noise: ProfitNoise,
) -> Result<ProfitBreakdown, MarketError> {
    let revenue = state.price * q as f64;
    let brand_bonus = brand_bonus(q, state.price, params, noise.brand)?;
    let subsidy = subsidy(q, params)?;
    let fixed_cost_paid =
        (state.fixed_cost_base * (1.0 + params.production_noise * noise.fixed_cost)).max(0.0);
    let production_cost = production_cost(q, state.t, params, noise.production)?;
    let storage_penalty = storage_penalty(q, demand, params);
    let profit =
        revenue + brand_bonus + subsidy - fixed_cost_paid - production_cost - storage_penalty;
    Ok(ProfitBreakdown {
        revenue,
        brand_bonus,
        subsidy,
        fixed_cost_paid,
        production_cost,
        storage_penalty,
        profit,
    })
}

/// Draws the per-episode fixed cost: normal centred on the range midpoint
/// with a sixth of the range as standard deviation, clipped to the range.
pub fn draw_fixed_cost<R: Rng + ?Sized>(params: &MarketParams, rng: &mut R) -> f64 {
    let lo = params.fixed_cost_min;
    let hi = params.fixed_cost_max;
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    ((lo + hi) / 2.0 + z * (hi - lo) / 6.0).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(price: f64, fixed: f64) -> MarketState {
        MarketState {
            price,
            competitor_q: vec![7, 7, 7],
            t: 0,
            fixed_cost_base: fixed,
            last_agent_q: 7,
            last_total_supply: 28.0,
            last_total_demand: 28.1,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn cubic_cost_examples() {
        let p = MarketParams::default();
        assert_eq!(cubic_cost(0, &p).unwrap(), 0.0);
        assert!(close(cubic_cost(5, &p).unwrap(), 8.75));
        assert!(close(cubic_cost(14, &p).unwrap(), 20.72));
        assert!(matches!(
            cubic_cost(15, &p),
            Err(MarketError::QuantityOutOfRange { q: 15, .. })
        ));
    }

    #[test]
    fn seasonal_factor_examples() {
        assert_eq!(seasonal_factor(0, 200, 0.2).unwrap(), 1.0);
        assert!((seasonal_factor(100, 200, 0.2).unwrap() - 1.0).abs() < 1e-12);
        assert!((seasonal_factor(50, 200, 0.2).unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(seasonal_factor(3, 0, 0.2), Err(MarketError::NonPositivePeriod));
    }

    #[test]
    fn demand_examples() {
        let p = MarketParams::default();
        assert!(close(demand_at(0.0, 0, &p, 0.0).unwrap(), 43.4));
        assert!(close(demand_at(15.0, 0, &p, 0.0).unwrap(), 43.4 - 1.02 * 15.0));
        assert_eq!(demand_at(1e6, 0, &p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn competitor_examples() {
        let p = MarketParams::default();
        assert_eq!(
            competitor_update_with(&[7, 7, 7], 7, 7, &[0, 0, 0], &p).unwrap(),
            vec![7, 7, 7]
        );
        assert_eq!(
            competitor_update_with(&[0, 0, 0], 9, 3, &[-1, -1, -1], &p).unwrap(),
            vec![0, 0, 0]
        );
        assert_eq!(
            competitor_update_with(&[7, 7, 7], 9, 3, &[1, 0, -1], &p).unwrap(),
            vec![7, 6, 5]
        );
        assert!(competitor_update_with(&[7, 7, 7], 15, 3, &[0, 0, 0], &p).is_err());
    }

    #[test]
    fn production_cost_examples() {
        let mut p = MarketParams::default();
        assert_eq!(production_cost(0, 17, &p, 0.3).unwrap(), 0.0);
        assert!(close(production_cost(5, 0, &p, 0.0).unwrap(), 8.75));
        p.supply_amplitude = 0.1;
        let quarter = p.supply_period as u64 / 4;
        assert!(close(production_cost(5, quarter, &p, 0.0).unwrap(), 9.625));
    }

    #[test]
    fn storage_examples() {
        let mut p = MarketParams::default();
        p.storage_factor = 2.0;
        p.storage_exponent_cap = 10;
        assert_eq!(storage_penalty(5, 10.0, &p), 0.0);
        assert!(close(storage_penalty(10, 7.0, &p), 7.0));
        assert!(close(storage_penalty(14, 0.0, &p), 1023.0));
    }

    #[test]
    fn price_examples() {
        let mut p = MarketParams::default();
        assert_eq!(price_update(15.0, 20.0, 20.0, &p, 0.0), 15.0);
        p.price_sensitivity = 0.1;
        assert!(close(price_update(15.0, 15.0, 30.0, &p, 0.0), 15.75));
        assert_eq!(price_update(59.0, 0.0, 100.0, &p, 0.0), p.p_max);
        assert_eq!(price_update(1.5, 100.0, 0.0, &p, -5.0), p.p_min);
    }

    #[test]
    fn brand_and_subsidy_examples() {
        let p = MarketParams::default();
        assert_eq!(brand_bonus(0, 15.0, &p, 0.0).unwrap(), 0.0);
        assert!(close(brand_bonus(14, 15.0, &p, 0.0).unwrap(), 63.0));
        assert!(close(brand_bonus(7, 15.0, &p, 0.0).unwrap(), 15.75));
        assert_eq!(subsidy(0, &p).unwrap(), 0.0);
        assert!(close(subsidy(14, &p).unwrap(), 10.0));
        assert!(close(subsidy(7, &p).unwrap(), 5.0));
    }

    #[test]
    fn profit_examples() {
        let p = MarketParams::default();
        let idle = profit(0, &state(15.0, 5.0), 28.1, &p, ProfitNoise::default()).unwrap();
        assert_eq!(idle.profit, -5.0);

        let full = profit(14, &state(15.0, 5.0), 43.4, &p, ProfitNoise::default()).unwrap();
        assert!(close(full.revenue, 210.0));
        assert!(close(full.brand_bonus, 63.0));
        assert!(close(full.subsidy, 10.0));
        assert!(close(full.production_cost, 20.72));
        assert_eq!(full.storage_penalty, 0.0);
        assert!(close(full.profit, 257.28));

        let glut = profit(14, &state(15.0, 5.0), 0.0, &p, ProfitNoise::default()).unwrap();
        assert!(close(glut.profit, -765.72));
    }

    #[test]
    fn fixed_cost_draw_stays_in_range() {
        let p = MarketParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let f = draw_fixed_cost(&p, &mut rng);
            assert!((p.fixed_cost_min..=p.fixed_cost_max).contains(&f));
        }
    }

    #[test]
    fn validate_rejects_bad_params() {
        assert!(MarketParams::default().validate().is_ok());
        let bad = [
            MarketParams { q_min: 20, ..Default::default() },
            MarketParams { n_competitors: 0, ..Default::default() },
            MarketParams { fixed_cost_min: 11.0, ..Default::default() },
            MarketParams { p_init: 70.0, ..Default::default() },
            MarketParams { storage_factor: 1.0, ..Default::default() },
            MarketParams { max_brand_effect: 1.0, ..Default::default() },
            MarketParams { demand_period: 0, ..Default::default() },
            MarketParams { production_noise: -0.1, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
