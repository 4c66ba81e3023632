//! Property-based checks of the invariants that hold for all inputs.

#![allow(clippy::needless_range_loop)]

use market_rl::algos::{clipped_surrogate, dqn_target, BaselineSpec};
use market_rl::env::{Action, EnvConfig, MarketEnv};
use market_rl::market::{self, MarketParams};
use market_rl::nn::{Categorical, ForwardCache, Mlp};
use market_rl::seeding::derive_seed;
use market_rl::stats::{explained_variance, one_sample_t_test, student_t_cdf, welch_t_test, SampleSummary};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 2..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mlp_gradient_matches_central_differences(
        sizes in prop::collection::vec(1usize..6, 2..5),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::orthogonal(&sizes, 1.3, 0.7, &mut rng).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|i| ((seed >> (i % 60)) & 7) as f64 / 4.0 - 0.9).collect();
        let g: Vec<f64> = (0..*sizes.last().unwrap()).map(|i| 1.0 - 0.3 * i as f64).collect();
        let mut cache = ForwardCache::default();
        net.forward_cached(&x, &mut cache).unwrap();
        let mut grads = net.zero_grads();
        let input_grad = net.backward(&mut cache, &g, &mut grads).unwrap();
        let f = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).unwrap().iter().zip(&g).map(|(o, w)| o * w).sum() };
        let h = 1e-6;
        let mut probe = net.clone();
        for i in 0..net.num_params() {
            let orig = net.params()[i];
            probe.params_mut()[i] = orig + h;
            let up = f(&probe, &x);
            probe.params_mut()[i] = orig - h;
            let down = f(&probe, &x);
            probe.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            prop_assert!((numeric - grads[i]).abs() <= 1e-6 + 1e-4 * numeric.abs().max(grads[i].abs()));
        }
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let numeric = (f(&net, &xp) - f(&net, &xm)) / (2.0 * h);
            prop_assert!((numeric - input_grad[j]).abs() <= 1e-6 + 1e-4 * numeric.abs());
        }
    }

    #[test]
    fn categorical_is_shift_invariant(logits in prop::collection::vec(-30.0..30.0f64, 1..16), shift in -100.0..100.0f64) {
        let a = Categorical::new(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let b = Categorical::new(&shifted);
        let pa = a.probs();
        prop_assert!((pa.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in pa.iter().zip(b.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.entropy() - b.entropy()).abs() < 1e-9);
        prop_assert!(a.entropy() >= -1e-12 && a.entropy() <= (logits.len() as f64).ln() + 1e-12);
        prop_assert_eq!(a.mode(), b.mode());
    }

    #[test]
    fn clipped_surrogate_never_exceeds_unclipped(r in 0.0..5.0f64, adv in -10.0..10.0f64, eps in 0.01..0.5f64) {
        prop_assert!(clipped_surrogate(r, adv, eps) <= r * adv + 1e-12);
    }

    #[test]
    fn dqn_target_ignores_future_when_done(r in -100.0..100.0f64, q in prop::collection::vec(-50.0..50.0f64, 1..15), gamma in 0.0..1.0f64) {
        prop_assert_eq!(dqn_target(r, true, &q, gamma), r);
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(dqn_target(r, false, &q, gamma), r + gamma * best);
    }

    #[test]
    fn subsidy_brand_storage_are_monotone(q in 0u32..14, price in 1.0..60.0f64, demand in 0.0..50.0f64, dd in 0.0..10.0f64) {
        let p = MarketParams::default();
        prop_assert!(market::subsidy(q + 1, &p).unwrap() >= market::subsidy(q, &p).unwrap());
        prop_assert!(market::brand_bonus(q + 1, price, &p, 0.0).unwrap() >= market::brand_bonus(q, price, &p, 0.0).unwrap());
        prop_assert!(market::storage_penalty(q + 1, demand, &p) >= market::storage_penalty(q, demand, &p));
        prop_assert!(market::storage_penalty(q, demand + dd, &p) <= market::storage_penalty(q, demand, &p));
        prop_assert!(market::storage_penalty(q, demand, &p) >= 0.0);
    }

    #[test]
    fn price_moves_against_excess_supply(price in 1.0..60.0f64, supply in 0.0..80.0f64, demand in 0.0..80.0f64) {
        let p = MarketParams::default();
        let next = market::price_update(price, supply, demand, &p, 0.0);
        prop_assert!(next >= p.p_min && next <= p.p_max);
        if supply > demand && price > p.p_min {
            prop_assert!(next < price);
        }
        if demand > supply && price < p.p_max {
            prop_assert!(next > price);
        }
    }

    #[test]
    fn trajectories_stay_in_bounds_and_decompose(seed in any::<u64>(), actions in prop::collection::vec(0u32..15, 1..200)) {
        let cfg = EnvConfig { horizon: 200, ..Default::default() };
        let mut env = MarketEnv::new(cfg).unwrap();
        env.reset(seed).unwrap();
        for units in actions {
            let r = env.step(Action { units }).unwrap();
            let p = env.params();
            let state = env.state().unwrap();
            prop_assert!(state.price >= p.p_min && state.price <= p.p_max);
            prop_assert!(state.competitor_q.iter().all(|&c| c >= p.q_min && c <= p.q_max));
            prop_assert!(state.fixed_cost_base >= p.fixed_cost_min && state.fixed_cost_base <= p.fixed_cost_max);
            let b = r.breakdown;
            let sum = b.revenue + b.brand_bonus + b.subsidy - b.fixed_cost_paid - b.production_cost - b.storage_penalty;
            prop_assert!((sum - b.profit).abs() <= 1e-9 * b.profit.abs().max(1.0));
            prop_assert!(b.brand_bonus >= 0.0 && b.subsidy >= 0.0 && b.storage_penalty >= 0.0 && b.production_cost >= 0.0);
            prop_assert_eq!(env.encode(&r.observation).len(), 8);
        }
    }

    #[test]
    fn same_seed_same_trajectory(seed in any::<u64>()) {
        let run = || {
            let mut env = MarketEnv::new(EnvConfig { horizon: 50, ..Default::default() }).unwrap();
            env.reset(seed).unwrap();
            (0..50).map(|t| env.step(Action { units: (t * 7 % 15) as u32 }).unwrap().reward.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn t_cdf_is_symmetric_and_monotone(x in -50.0..50.0f64, dx in 0.0..5.0f64, dof in 0.5..200.0f64) {
        let c = student_t_cdf(x, dof);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c + student_t_cdf(-x, dof) - 1.0).abs() < 1e-10);
        prop_assert!(student_t_cdf(x + dx, dof) >= c - 1e-14);
    }

    #[test]
    fn welch_is_antisymmetric_and_scale_invariant(a in sample(), b in sample(), scale in 0.01..100.0f64) {
        let sa = SampleSummary::from_samples(&a).unwrap();
        let sb = SampleSummary::from_samples(&b).unwrap();
        prop_assume!(sa.variance > 1e-9 && sb.variance > 1e-9);
        let ab = welch_t_test(&sa, &sb).unwrap();
        let ba = welch_t_test(&sb, &sa).unwrap();
        prop_assert!((ab.t_statistic + ba.t_statistic).abs() <= 1e-9 * ab.t_statistic.abs().max(1.0));
        prop_assert!((ab.p_value + ba.p_value - 1.0).abs() < 1e-9);
        let scaled = |xs: &[f64]| SampleSummary::from_samples(&xs.iter().map(|x| x * scale).collect::<Vec<_>>()).unwrap();
        let s = welch_t_test(&scaled(&a), &scaled(&b)).unwrap();
        prop_assert!((s.t_statistic - ab.t_statistic).abs() <= 1e-8 * ab.t_statistic.abs().max(1.0));
        prop_assert!((s.degrees_of_freedom - ab.degrees_of_freedom).abs() <= 1e-8 * ab.degrees_of_freedom);
    }

    #[test]
    fn one_sample_is_shift_invariant(a in sample(), shift in -1e3..1e3f64) {
        let sa = SampleSummary::from_samples(&a).unwrap();
        prop_assume!(sa.variance > 1e-9);
        let shifted = SampleSummary::from_samples(&a.iter().map(|x| x + shift).collect::<Vec<_>>()).unwrap();
        let t0 = one_sample_t_test(&sa, 0.0).unwrap();
        let t1 = one_sample_t_test(&shifted, shift).unwrap();
        prop_assert!((t0.t_statistic - t1.t_statistic).abs() <= 1e-6 * t0.t_statistic.abs().max(1.0));
        prop_assert_eq!(t0.degrees_of_freedom, (a.len() - 1) as f64);
    }

    #[test]
    fn explained_variance_bounds(returns in sample(), noise in sample()) {
        prop_assume!(SampleSummary::from_samples(&returns).unwrap().variance > 1e-6);
        prop_assert!((explained_variance(&returns, &returns).unwrap() - 1.0).abs() < 1e-12);
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let constant = vec![mean; returns.len()];
        prop_assert!(explained_variance(&returns, &constant).unwrap().abs() < 1e-9);
        let values: Vec<f64> = returns.iter().zip(noise.iter().cycle()).map(|(r, n)| r + n).collect();
        prop_assert!(explained_variance(&returns, &values).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn derived_seeds_separate_labels(parent in any::<u64>(), a in "[a-z]{1,8}", b in "[a-z]{1,8}") {
        prop_assume!(a != b);
        prop_assert_eq!(derive_seed(parent, &a), derive_seed(parent, &a));
        prop_assert_ne!(derive_seed(parent, &a), derive_seed(parent, &b));
    }

    #[test]
    fn baseline_specs_round_trip(k in 0u32..15) {
        let spec = BaselineSpec::Fixed(k);
        prop_assert_eq!(spec.to_string().parse::<BaselineSpec>().unwrap(), spec);
    }
}
