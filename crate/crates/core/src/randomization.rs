//! Domain randomization over [`MarketParams`].

use crate::market::MarketParams;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomizationError {
    #[error("unknown market parameter `{0}`")]
    UnknownField(String),
    #[error("interval for `{field}` is empty or not finite: [{low}, {high}]")]
    BadInterval { field: String, low: f64, high: f64 },
    #[error("no valid parameter set after {0} draws")]
    Exhausted(usize),
}

/// Distribution of a single parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamDist {
    Point(f64),
    /// Uniform on `[low, high]`; integer fields draw uniformly among the
    /// integers in the rounded interval.
    Uniform { low: f64, high: f64 },
}

/// Per-field distributions keyed by field name (`cost_c0`..`cost_c3` address
/// the cost coefficients). Fields not listed keep their base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomizationSpec {
    pub fields: BTreeMap<String, ParamDist>,
}

const MAX_DRAWS: usize = 1000;

enum Slot<'a> {
    Real(&'a mut f64),
    Int(&'a mut u32),
    Count(&'a mut usize),
}

fn slot<'a>(params: &'a mut MarketParams, name: &str) -> Option<Slot<'a>> {
    use Slot::*;
    Some(match name {
        "q_min" => Int(&mut params.q_min),
        "q_max" => Int(&mut params.q_max),
        "n_competitors" => Count(&mut params.n_competitors),
        "p_init" => Real(&mut params.p_init),
        "fixed_cost_min" => Real(&mut params.fixed_cost_min),
        "fixed_cost_max" => Real(&mut params.fixed_cost_max),
        "cost_c0" => Real(&mut params.cost_coefs[0]),
        "cost_c1" => Real(&mut params.cost_coefs[1]),
        "cost_c2" => Real(&mut params.cost_coefs[2]),
        "cost_c3" => Real(&mut params.cost_coefs[3]),
        "elasticity" => Real(&mut params.elasticity),
        "base_demand" => Real(&mut params.base_demand),
        "production_noise" => Real(&mut params.production_noise),
        "storage_factor" => Real(&mut params.storage_factor),
        "max_brand_effect" => Real(&mut params.max_brand_effect),
        "max_subsidy" => Real(&mut params.max_subsidy),
        "demand_period" => Int(&mut params.demand_period),
        "supply_period" => Int(&mut params.supply_period),
        "demand_amplitude" => Real(&mut params.demand_amplitude),
        "supply_amplitude" => Real(&mut params.supply_amplitude),
        "price_sensitivity" => Real(&mut params.price_sensitivity),
        "quad_demand_coef" => Real(&mut params.quad_demand_coef),
        "p_min" => Real(&mut params.p_min),
        "p_max" => Real(&mut params.p_max),
        "storage_exponent_cap" => Int(&mut params.storage_exponent_cap),
        _ => return None,
    })
}

impl RandomizationSpec {
    /// A spec that pins every field to the given parameters.
    pub fn point_mass(params: &MarketParams) -> Self {
        let mut fields = BTreeMap::new();
        let reals = [
            ("p_init", params.p_init),
            ("fixed_cost_min", params.fixed_cost_min),
            ("fixed_cost_max", params.fixed_cost_max),
            ("cost_c0", params.cost_coefs[0]),
            ("cost_c1", params.cost_coefs[1]),
            ("cost_c2", params.cost_coefs[2]),
            ("cost_c3", params.cost_coefs[3]),
            ("elasticity", params.elasticity),
            ("base_demand", params.base_demand),
            ("production_noise", params.production_noise),
            ("storage_factor", params.storage_factor),
            ("max_brand_effect", params.max_brand_effect),
            ("max_subsidy", params.max_subsidy),
            ("demand_amplitude", params.demand_amplitude),
            ("supply_amplitude", params.supply_amplitude),
            ("price_sensitivity", params.price_sensitivity),
            ("quad_demand_coef", params.quad_demand_coef),
            ("p_min", params.p_min),
            ("p_max", params.p_max),
        ];
        let ints = [
            ("q_min", params.q_min as f64),
            ("q_max", params.q_max as f64),
            ("n_competitors", params.n_competitors as f64),
            ("demand_period", params.demand_period as f64),
            ("supply_period", params.supply_period as f64),
            ("storage_exponent_cap", params.storage_exponent_cap as f64),
        ];
        for (name, value) in reals.into_iter().chain(ints) {
            fields.insert(name.to_string(), ParamDist::Point(value));
        }
        Self { fields }
    }

    pub fn validate(&self) -> Result<(), RandomizationError> {
        let mut probe = MarketParams::default();
        for (name, dist) in &self.fields {
            if slot(&mut probe, name).is_none() {
                return Err(RandomizationError::UnknownField(name.clone()));
            }
            let (low, high) = match *dist {
                ParamDist::Point(v) => (v, v),
                ParamDist::Uniform { low, high } => (low, high),
            };
            if !(low.is_finite() && high.is_finite() && low <= high) {
                return Err(RandomizationError::BadInterval {
                    field: name.clone(),
                    low,
                    high,
                });
            }
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(dist: &ParamDist, integer: bool, rng: &mut R) -> f64 {
    match *dist {
        ParamDist::Point(v) => v,
        ParamDist::Uniform { low, high } if integer => {
            let lo = low.round().max(0.0) as u64;
            let hi = (high.round().max(0.0) as u64).max(lo);
            rng.random_range(lo..=hi) as f64
        }
        ParamDist::Uniform { low, high } if low == high => low,
        ParamDist::Uniform { low, high } => rng.random_range(low..=high),
    }
}

/// Draws every listed field independently (in name order) on top of `base`,
/// redrawing until the result satisfies the parameter invariants.
pub fn sample_params<R: Rng + ?Sized>(
    spec: &RandomizationSpec,
    base: &MarketParams,
    rng: &mut R,
) -> Result<MarketParams, RandomizationError> {
    spec.validate()?;
    for _ in 0..MAX_DRAWS {
        let mut params = base.clone();
        for (name, dist) in &spec.fields {
            match slot(&mut params, name).expect("validated field name") {
                Slot::Real(v) => *v = draw(dist, false, rng),
                Slot::Int(v) => *v = draw(dist, true, rng) as u32,
                Slot::Count(v) => *v = draw(dist, true, rng) as usize,
            }
        }
        if params.validate().is_ok() {
            return Ok(params);
        }
    }
    Err(RandomizationError::Exhausted(MAX_DRAWS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_reproduces_base() {
        let base = MarketParams::default();
        let spec = RandomizationSpec::point_mass(&base);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Sample on top of different params to prove every field is pinned.
        let other = MarketParams {
            q_max: 20,
            elasticity: 3.0,
            cost_coefs: [1.0, 1.0, 1.0, 1.0],
            ..base.clone()
        };
        assert_eq!(sample_params(&spec, &other, &mut rng).unwrap(), base);
    }

    #[test]
    fn degenerate_integer_interval() {
        let mut spec = RandomizationSpec::default();
        spec.fields
            .insert("q_max".into(), ParamDist::Uniform { low: 14.0, high: 14.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = sample_params(&spec, &MarketParams::default(), &mut rng).unwrap();
            assert_eq!(p.q_max, 14);
        }
    }

    #[test]
    fn elasticity_interval_mean() {
        let mut spec = RandomizationSpec::default();
        spec.fields
            .insert("elasticity".into(), ParamDist::Uniform { low: 0.9, high: 1.1 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..1000)
            .map(|_| sample_params(&spec, &MarketParams::default(), &mut rng).unwrap().elasticity)
            .collect();
        assert!(draws.iter().all(|e| (0.9..=1.1).contains(e)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn samples_satisfy_invariants() {
        let mut spec = RandomizationSpec::default();
        spec.fields
            .insert("q_max".into(), ParamDist::Uniform { low: 0.0, high: 20.0 });
        spec.fields
            .insert("p_init".into(), ParamDist::Uniform { low: 0.0, high: 80.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p = sample_params(&spec, &MarketParams::default(), &mut rng).unwrap();
            p.validate().unwrap();
        }
    }

    #[test]
    fn rejects_unknown_and_inverted() {
        let mut spec = RandomizationSpec::default();
        spec.fields.insert("elastic".into(), ParamDist::Point(1.0));
        assert!(matches!(spec.validate(), Err(RandomizationError::UnknownField(_))));
        let mut spec = RandomizationSpec::default();
        spec.fields
            .insert("elasticity".into(), ParamDist::Uniform { low: 2.0, high: 1.0 });
        assert!(matches!(spec.validate(), Err(RandomizationError::BadInterval { .. })));
    }
}
