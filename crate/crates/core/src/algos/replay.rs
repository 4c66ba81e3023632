use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTransition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// True only for terminal states; truncation keeps bootstrapping.
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<ReplayTransition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of insertions, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, transition: ReplayTransition) {
        let slot = (self.inserted % self.capacity as u64) as usize;
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[slot] = transition;
        }
        self.inserted += 1;
    }

    pub fn get(&self, index: usize) -> &ReplayTransition {
        &self.items[index]
    }

    /// `batch` indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        assert!(!self.items.is_empty(), "cannot sample an empty buffer");
        (0..batch).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(i: usize) -> ReplayTransition {
        ReplayTransition {
            observation: vec![i as f64],
            action: i,
            reward: 0.0,
            next_observation: vec![],
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(tr(i));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.inserted(), 5);
        let mut actions: Vec<usize> = (0..3).map(|i| b.get(i).action).collect();
        actions.sort();
        assert_eq!(actions, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_is_uniform() {
        let k = 100;
        let mut b = ReplayBuffer::new(k);
        (0..k).for_each(|i| b.push(tr(i)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let mut counts = vec![0usize; k];
        for i in b.sample_indices(draws, &mut rng) {
            counts[i] += 1;
        }
        let expected = draws as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Wilson-Hilferty upper 0.999 quantile of chi-square(k - 1).
        let df = (k - 1) as f64;
        let z = 3.090_232;
        let crit = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }
}
