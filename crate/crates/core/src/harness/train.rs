use super::{create_dir, io_err, write_json, ExperimentConfig, HarnessError, TrainSection};
use crate::algos::{AlgoError, Checkpoint, Registry, TrainObserver, UpdateMetrics, VecEnv};
use crate::env::{EnvConfig, Environment, MarketEnv};
use crate::seeding::{derive_path, derive_seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::path::{Path, PathBuf};

/// Seed of the `index`-th agent of `algorithm` under `master`.
pub fn agent_seed(master: u64, algorithm: &str, index: u64) -> u64 {
    derive_path(master, &["agent", algorithm, &index.to_string()])
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: Vec<UpdateMetrics>,
    /// Every file written, final checkpoint and metrics included.
    pub files: Vec<PathBuf>,
}

pub(crate) fn make_envs(env: &EnvConfig, n: usize) -> Result<Vec<Box<dyn Environment>>, HarnessError> {
    (0..n)
        .map(|_| Ok(Box::new(MarketEnv::new(env.clone())?) as Box<dyn Environment>))
        .collect()
}

struct FileObserver {
    metrics: csv::Writer<File>,
    rows: Vec<UpdateMetrics>,
    checkpoint_dir: PathBuf,
    interval: u64,
    next_checkpoint: u64,
    observation_scaling: bool,
    files: Vec<PathBuf>,
}

impl FileObserver {
    fn save_periodic(&mut self, env_steps: u64, checkpoint: &dyn Fn() -> Checkpoint) -> Result<(), AlgoError> {
        if self.interval == 0 || env_steps < self.next_checkpoint {
            return Ok(());
        }
        while self.next_checkpoint <= env_steps {
            self.next_checkpoint += self.interval;
        }
        let mut ckpt = checkpoint();
        ckpt.observation_scaling = Some(self.observation_scaling);
        let path = self.checkpoint_dir.join(format!("checkpoint_{env_steps:010}.json"));
        ckpt.save(&path)?;
        self.files.push(path);
        Ok(())
    }
}

impl TrainObserver for FileObserver {
    fn on_update(&mut self, metrics: &UpdateMetrics, checkpoint: &dyn Fn() -> Checkpoint) -> Result<(), AlgoError> {
        let observer_err = |e: csv::Error| AlgoError::Observer(e.to_string());
        self.metrics.serialize(metrics).map_err(observer_err)?;
        self.metrics
            .flush()
            .map_err(|e| AlgoError::Observer(e.to_string()))?;
        self.rows.push(metrics.clone());
        self.save_periodic(metrics.env_steps, checkpoint)
    }
}

/// Trains one agent into `out_dir`: `metrics.csv`, `checkpoint.json`, and
/// periodic checkpoints under `checkpoints/`.
pub fn train_agent(
    env: &EnvConfig,
    train: &TrainSection,
    algorithm: &str,
    algo_config: &serde_json::Value,
    seed: u64,
    out_dir: &Path,
) -> Result<TrainOutcome, HarnessError> {
    let registry = Registry::builtin();
    let algo = registry.get(algorithm)?;
    let mut envs = VecEnv::new(make_envs(env, train.n_envs)?, derive_seed(seed, "env"))?;
    let mut learner = algo.learner(
        envs.observation_dim(),
        envs.num_actions(),
        algo_config,
        derive_seed(seed, "init"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "learn"));

    create_dir(out_dir)?;
    let checkpoint_dir = out_dir.join("checkpoints");
    if train.checkpoint_interval > 0 {
        create_dir(&checkpoint_dir)?;
    }
    let metrics_path = out_dir.join("metrics.csv");
    let file = File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut observer = FileObserver {
        metrics: csv::Writer::from_writer(file),
        rows: Vec::new(),
        checkpoint_dir,
        interval: train.checkpoint_interval,
        next_checkpoint: train.checkpoint_interval,
        observation_scaling: env.observation_scaling,
        files: Vec::new(),
    };
    learner.learn(&mut envs, train.total_steps, &mut rng, &mut observer)?;
    observer.metrics.flush().map_err(io_err(&metrics_path))?;

    let mut checkpoint = learner.checkpoint();
    checkpoint.observation_scaling = Some(env.observation_scaling);
    let checkpoint_path = out_dir.join("checkpoint.json");
    checkpoint.save(&checkpoint_path)?;
    let mut files = observer.files;
    files.push(metrics_path.clone());
    files.push(checkpoint_path.clone());
    Ok(TrainOutcome {
        checkpoint,
        checkpoint_path,
        metrics_path,
        metrics: observer.rows,
        files,
    })
}

/// Trains the configured algorithm as agent 0 of the master seed.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    create_dir(out_dir)?;
    write_json(&out_dir.join("config.json"), cfg)?;
    let seed = agent_seed(cfg.seed, &cfg.algo.name, 0);
    train_agent(&cfg.env, &cfg.train, &cfg.algo.name, &cfg.algo.config, seed, out_dir)
}
