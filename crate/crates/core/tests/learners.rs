//! Learner convergence on environments with known optima.

use market_rl::algos::toy::{Bandit, Chain};
use market_rl::algos::{
    A2c, A2cConfig, ActMode, Dqn, DqnConfig, Learner, MetricsLog, Ppo, PpoConfig, VecEnv,
};
use market_rl::env::Environment;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bandit() -> VecEnv {
    VecEnv::new(vec![Box::new(Bandit) as Box<dyn Environment>], 0).unwrap()
}

fn best_arm_probability(learner: &dyn Learner) -> f64 {
    let ckpt = learner.checkpoint();
    let net = ckpt.network("policy").unwrap();
    let logits = net.forward(&[1.0]).unwrap();
    let m = logits[0].max(logits[1]);
    let (e0, e1) = ((logits[0] - m).exp(), (logits[1] - m).exp());
    e0 / (e0 + e1)
}

#[test]
fn ppo_prefers_paying_arm() {
    let cfg = PpoConfig {
        rollout_length: 256,
        reward_scale: 1.0,
        ..Default::default()
    };
    let mut ppo = Ppo::new(1, 2, cfg, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut log = MetricsLog::default();
    ppo.learn(&mut bandit(), 50 * 256, &mut rng, &mut log).unwrap();
    assert_eq!(log.rows.len(), 50);
    let p = best_arm_probability(&ppo);
    println!("ppo P(best) = {p}");
    assert!(p > 0.9, "{p}");
}

#[test]
fn a2c_prefers_paying_arm() {
    let cfg = A2cConfig {
        reward_scale: 1.0,
        ..Default::default()
    };
    let mut a2c = A2c::new(1, 2, cfg, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    a2c.learn(&mut bandit(), 2000 * 5, &mut rng, &mut MetricsLog::default()).unwrap();
    let p = best_arm_probability(&a2c);
    println!("a2c P(best) = {p}");
    assert!(p > 0.9, "{p}");
    let mut policy = a2c.policy();
    assert_eq!(policy.act(&[1.0], ActMode::Greedy, &mut rng).unwrap(), 0);
}

/// Q* of the chain by value iteration.
fn chain_q_star(gamma: f64) -> [[f64; 2]; 3] {
    let mut q = [[0.0f64; 2]; 3];
    for _ in 0..10_000 {
        let mut next = q;
        for (s, row) in next.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (s2, r) = Chain::transition(s, a);
                *v = r + gamma * q[s2][0].max(q[s2][1]);
            }
        }
        q = next;
    }
    q
}

#[test]
fn chain_oracle_values() {
    let q = chain_q_star(0.9);
    let expect = [[7.29, 8.1], [8.1, 9.0], [10.0, 10.0]];
    for s in 0..3 {
        for a in 0..2 {
            assert!((q[s][a] - expect[s][a]).abs() < 1e-9);
        }
    }
}

#[test]
fn dqn_reaches_bellman_fixed_point() {
    let gamma = 0.9;
    let cfg = DqnConfig {
        gamma,
        buffer_size: 10_000,
        batch_size: 32,
        target_sync_interval: 100,
        exploration_final: 1.0,
        learning_rate: 1e-4,
        learning_rate_final: Some(0.0),
        learning_starts: 100,
        train_freq: 1,
        reward_scale: 1.0,
        log_interval: 1000,
        ..Default::default()
    };
    let envs = (0..1).map(|_| Box::new(Chain::new(20)) as Box<dyn Environment>).collect();
    let mut envs = VecEnv::new(envs, 5).unwrap();
    let mut dqn = Dqn::new(3, 2, cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    dqn.learn(&mut envs, 20_100, &mut rng, &mut MetricsLog::default()).unwrap();
    assert!(dqn.gradient_updates() >= 20_000);
    let q_star = chain_q_star(gamma);
    let mut worst: f64 = 0.0;
    for s in 0..3 {
        let q = dqn.q_network().forward(&Chain::one_hot(s)).unwrap();
        for a in 0..2 {
            worst = worst.max((q[a] - q_star[s][a]).abs());
        }
    }
    println!("dqn max |Q - Q*| = {worst:e}");
    assert!(worst < 1e-3, "{worst}");
}
