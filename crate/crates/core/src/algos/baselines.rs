use super::{ActMode, AlgoError, Checkpoint, Policy};
use crate::market::MarketParams;
use rand::{Rng, RngCore};
use std::fmt;
use std::str::FromStr;

/// `fixed:<units>` or `random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSpec {
    Fixed(u32),
    Random,
}

impl FromStr for BaselineSpec {
    type Err = AlgoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AlgoError::BadBaseline(s.to_string());
        match s.trim() {
            "random" => Ok(Self::Random),
            other => {
                let units = other.strip_prefix("fixed:").ok_or_else(bad)?;
                units.trim().parse().map(Self::Fixed).map_err(|_| bad())
            }
        }
    }
}

impl fmt::Display for BaselineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(k) => write!(f, "fixed:{k}"),
            Self::Random => f.write_str("random"),
        }
    }
}

/// Produces the same quantity every step.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    index: usize,
    num_actions: usize,
}

impl FixedPolicy {
    pub fn new(units: u32, params: &MarketParams) -> Result<Self, AlgoError> {
        params
            .check_quantity(units)
            .map_err(|_| AlgoError::BadBaseline(format!("fixed:{units}")))?;
        Ok(Self {
            index: (units - params.q_min) as usize,
            num_actions: params.num_actions(),
        })
    }
}

impl Policy for FixedPolicy {
    fn algorithm(&self) -> &str {
        "fixed"
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn act(&mut self, _: &[f64], _: ActMode, _: &mut dyn RngCore) -> Result<usize, AlgoError> {
        Ok(self.index)
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        None
    }
}

/// Uniform over every action, in both modes.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    num_actions: usize,
}

impl RandomPolicy {
    pub fn new(num_actions: usize) -> Self {
        assert!(num_actions > 0);
        Self { num_actions }
    }
}

impl Policy for RandomPolicy {
    fn algorithm(&self) -> &str {
        "random"
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn act(&mut self, _: &[f64], _: ActMode, rng: &mut dyn RngCore) -> Result<usize, AlgoError> {
        Ok(rng.random_range(0..self.num_actions))
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        None
    }
}

pub fn parse_baseline(spec: &str, params: &MarketParams) -> Result<Box<dyn Policy>, AlgoError> {
    Ok(match spec.parse::<BaselineSpec>()? {
        BaselineSpec::Fixed(k) => Box::new(FixedPolicy::new(k, params)?),
        BaselineSpec::Random => Box::new(RandomPolicy::new(params.num_actions())),
    })
}
