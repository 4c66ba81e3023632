use rand::Rng;

/// Categorical distribution parameterized by unnormalized logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    logits: Vec<f64>,
    log_normalizer: f64,
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the first maximal element.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Categorical {
    pub fn new(logits: &[f64]) -> Self {
        assert!(!logits.is_empty(), "categorical needs at least one logit");
        Self {
            log_normalizer: log_sum_exp(logits),
            logits: logits.to_vec(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logits
            .iter()
            .map(|l| (l - self.log_normalizer).exp())
            .collect()
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.logits[action] - self.log_normalizer
    }

    pub fn entropy(&self) -> f64 {
        self.logits
            .iter()
            .map(|l| {
                let lp = l - self.log_normalizer;
                let p = lp.exp();
                if p > 0.0 {
                    -p * lp
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Inverse-CDF sample using one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, l) in self.logits.iter().enumerate() {
            let p = (l - self.log_normalizer).exp();
            if p > 0.0 {
                last_positive = i;
            }
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
        // Rounding left the total slightly below u.
        last_positive
    }

    pub fn mode(&self) -> usize {
        argmax(&self.logits)
    }

    /// d log p(action) / d logits.
    pub fn log_prob_grad(&self, action: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.probs().into_iter().map(|p| -p).collect();
        g[action] += 1.0;
        g
    }

    /// d entropy / d logits.
    pub fn entropy_grad(&self) -> Vec<f64> {
        let h = self.entropy();
        self.logits
            .iter()
            .map(|l| {
                let lp = l - self.log_normalizer;
                let p = lp.exp();
                if p > 0.0 {
                    -p * (lp + h)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_log_probs_and_entropy() {
        let d = Categorical::new(&[0.3; 15]);
        for a in 0..15 {
            assert!((d.log_prob(a) + 15f64.ln()).abs() < 1e-12);
        }
        assert!((d.entropy() - 15f64.ln()).abs() < 1e-9);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dominant_logit_always_sampled() {
        let mut logits = vec![0.0; 15];
        logits[4] = 1000.0;
        let d = Categorical::new(&logits);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..10_000).all(|_| d.sample(&mut rng) == 4));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let d = Categorical::new(&[1e4, -1e4, 0.0]);
        assert!((0..3).all(|a| d.log_prob(a).is_finite()));
        assert!(d.entropy().is_finite());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let logits = [0.2, -1.3, 0.7, 2.1];
        let d = Categorical::new(&logits);
        let g_lp = d.log_prob_grad(2);
        let g_h = d.entropy_grad();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut up = logits;
            let mut down = logits;
            up[i] += h;
            down[i] -= h;
            let (u, dn) = (Categorical::new(&up), Categorical::new(&down));
            let fd_lp = (u.log_prob(2) - dn.log_prob(2)) / (2.0 * h);
            let fd_h = (u.entropy() - dn.entropy()) / (2.0 * h);
            assert!((fd_lp - g_lp[i]).abs() < 1e-8);
            assert!((fd_h - g_h[i]).abs() < 1e-8);
        }
    }
}
