//! Training diagnostics and one-sided t-tests.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample variance is zero")]
    ZeroVariance,
    #[error("non-finite sample value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased (n - 1) variance; zero for a single sample.
    pub variance: f64,
}

impl SampleSummary {
    pub fn from_samples(xs: &[f64]) -> Result<Self, StatsError> {
        if xs.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self { n, mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub alternative: Alternative,
}

impl TestResult {
    pub fn rejects_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn unbiased_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `1 - Var(returns - values) / Var(returns)`.
///
/// Returns `None` when undefined: fewer than two points, mismatched lengths,
/// or zero variance in `returns`.
pub fn explained_variance(returns: &[f64], values: &[f64]) -> Option<f64> {
    if returns.len() != values.len() || returns.len() < 2 {
        return None;
    }
    let total = unbiased_variance(returns.iter().copied());
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let residual = unbiased_variance(returns.iter().zip(values).map(|(r, v)| r - v));
    Some(1.0 - residual / total)
}

/// Welch's unequal-variance test of `H1: mean_a > mean_b`.
pub fn welch_t_test(a: &SampleSummary, b: &SampleSummary) -> Result<TestResult, StatsError> {
    for s in [a, b] {
        if s.n < 2 {
            return Err(StatsError::TooFewSamples { needed: 2, got: s.n });
        }
    }
    let sa = a.variance / a.n as f64;
    let sb = b.variance / b.n as f64;
    let diff = a.mean - b.mean;
    let se2 = sa + sb;
    let (t, dof) = if se2 > 0.0 {
        let dof = se2 * se2 / (sa * sa / (a.n - 1) as f64 + sb * sb / (b.n - 1) as f64);
        (diff / se2.sqrt(), dof)
    } else {
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        (t, (a.n + b.n - 2) as f64)
    };
    Ok(one_sided(t, dof))
}

/// One-sample test of `H1: mean > mu0`.
pub fn one_sample_t_test(a: &SampleSummary, mu0: f64) -> Result<TestResult, StatsError> {
    if a.n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: a.n });
    }
    if a.variance.is_nan() || a.variance <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = (a.mean - mu0) / (a.variance / a.n as f64).sqrt();
    Ok(one_sided(t, (a.n - 1) as f64))
}

fn one_sided(t: f64, dof: f64) -> TestResult {
    TestResult {
        t_statistic: t,
        degrees_of_freedom: dof,
        // Upper tail via symmetry keeps precision for large t.
        p_value: student_t_cdf(-t, dof).clamp(0.0, 1.0),
        alternative: Alternative::Greater,
    }
}

/// CDF of Student's t distribution with `dof` degrees of freedom.
pub fn student_t_cdf(x: f64, dof: f64) -> f64 {
    assert!(dof > 0.0, "degrees of freedom must be positive");
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == 0.0 {
        return 0.5;
    }
    let x2 = x * x;
    let denom = dof + x2;
    // I_{dof/(dof+x^2)}(dof/2, 1/2) is the two-sided tail mass.
    let tail = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, dof / denom, x2 / denom);
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta `I_x(a, b)`, with `y = 1 - x` passed
/// separately so callers can avoid cancellation near `x = 1`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, y) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 100_000;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos approximation (g = 7, nine terms), reflected below 1/2.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut series = COEFS[0];
    for (i, c) in COEFS.iter().enumerate().skip(1) {
        series += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Linear-interpolation quantile of pre-sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}
