use super::{create_dir, io_err, write_json, EvalSection, ExperimentConfig, HarnessError};
use crate::algos::{parse_baseline, ActMode, BaselineSpec, Checkpoint, Policy, Registry};
use crate::env::{EnvConfig, MarketEnv, TraceRow, TraceWriter};
use crate::seeding::derive_path;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Where an evaluated policy comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    Checkpoint(PathBuf),
    Baseline(BaselineSpec),
}

impl FromStr for PolicySource {
    type Err = HarnessError;

    /// Baseline specs (`fixed:<k>`, `random`) win; anything else is a path.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "random" || s.starts_with("fixed:") {
            return Ok(Self::Baseline(s.parse()?));
        }
        Ok(Self::Checkpoint(PathBuf::from(s)))
    }
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Checkpoint(p) => write!(f, "{}", p.display()),
            Self::Baseline(b) => write!(f, "{b}"),
        }
    }
}

impl PolicySource {
    pub fn load(&self, env: &EnvConfig) -> Result<Box<dyn Policy>, HarnessError> {
        match self {
            Self::Baseline(spec) => Ok(parse_baseline(&spec.to_string(), &env.params)?),
            Self::Checkpoint(path) => {
                let ckpt = Checkpoint::load(path)?;
                if ckpt.observation_dim != env.observation_dim() || ckpt.num_actions != env.params.num_actions() {
                    return Err(HarnessError::Config(format!(
                        "{}: checkpoint expects {} observations / {} actions, environment has {} / {}",
                        path.display(),
                        ckpt.observation_dim,
                        ckpt.num_actions,
                        env.observation_dim(),
                        env.params.num_actions()
                    )));
                }
                if ckpt.observation_scaling.is_some_and(|s| s != env.observation_scaling) {
                    return Err(HarnessError::Config(format!(
                        "{}: checkpoint was trained with observation_scaling = {}",
                        path.display(),
                        !env.observation_scaling
                    )));
                }
                Ok(Registry::builtin().restore(&ckpt)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub env_seed: u64,
    pub cumulative_profit: f64,
    /// Trace CSV, relative to the report's directory.
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitSummary {
    pub mean: f64,
    /// Unbiased; absent with a single episode.
    pub std_dev: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl ProfitSummary {
    fn from_profits(profits: &[f64]) -> Self {
        let n = profits.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std_dev: None,
                min: 0.0,
                max: 0.0,
            };
        }
        let mean = profits.iter().sum::<f64>() / n as f64;
        let std_dev = (n > 1).then(|| {
            (profits.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self {
            mean,
            std_dev,
            min: profits.iter().copied().fold(f64::INFINITY, f64::min),
            max: profits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    /// Comparison group, e.g. `ppo`, `fixed`, `random`.
    pub group: String,
    pub source: String,
    pub horizon: u64,
    pub episodes: Vec<EpisodeResult>,
    pub summary: ProfitSummary,
}

impl EvalReport {
    /// Mean cumulative profit over episodes: the per-agent sample used in
    /// group comparisons.
    pub fn mean_profit(&self) -> f64 {
        self.summary.mean
    }
}

/// Environment seed of evaluation episode `episode`, shared by every agent
/// evaluated under the same master seed.
pub(crate) fn eval_episode_seed(master: u64, episode: usize) -> u64 {
    derive_path(master, &["eval", "episode", &episode.to_string()])
}

/// Greedy evaluation over `eval.episodes` episodes of `eval.horizon` steps.
/// Traces go to `out_dir/traces/episode_<e>.csv`.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &EnvConfig,
    eval: &EvalSection,
    master: u64,
    label: &str,
    group: &str,
    out_dir: &Path,
) -> Result<EvalReport, HarnessError> {
    let mut env_cfg = env.clone();
    env_cfg.horizon = eval.horizon.max(1);
    let mut market = MarketEnv::new(env_cfg)?;
    if policy.num_actions() != market.params().num_actions() {
        return Err(HarnessError::Config(format!(
            "policy has {} actions, environment {}",
            policy.num_actions(),
            market.params().num_actions()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_path(master, &["eval", "policy", label]));
    let trace_dir = out_dir.join("traces");
    create_dir(&trace_dir)?;

    let mut episodes = Vec::with_capacity(eval.episodes);
    for episode in 0..eval.episodes {
        let env_seed = eval_episode_seed(master, episode);
        let mut obs = market.reset(env_seed)?;
        let rel = format!("traces/episode_{episode}.csv");
        let path = out_dir.join(&rel);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut trace = TraceWriter::new(BufWriter::new(file))?;
        let mut cumulative = 0.0;
        for _ in 0..eval.horizon {
            let index = policy.act(&market.encode(&obs), ActMode::Greedy, &mut rng)?;
            let action = market.action_from_index(index)?;
            let step = market.step(action)?;
            trace.write(&TraceRow::new(action, &step))?;
            cumulative += step.reward;
            obs = step.observation;
        }
        trace.finish()?;
        episodes.push(EpisodeResult {
            episode,
            env_seed,
            cumulative_profit: cumulative,
            trace: rel,
        });
    }
    let profits: Vec<f64> = episodes.iter().map(|e| e.cumulative_profit).collect();
    Ok(EvalReport {
        label: label.to_string(),
        group: group.to_string(),
        source: String::new(),
        horizon: eval.horizon,
        summary: ProfitSummary::from_profits(&profits),
        episodes,
    })
}

/// Evaluates one policy and writes `report.json` plus traces to `out_dir`.
pub fn cmd_eval(cfg: &ExperimentConfig, source: &PolicySource, out_dir: &Path) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let mut policy = source.load(&cfg.env)?;
    // Labels match the ones `replicate` uses, so both paths draw the same
    // policy random stream.
    let (label, group) = match source {
        PolicySource::Baseline(BaselineSpec::Fixed(k)) => (format!("fixed_{k}"), "fixed".to_string()),
        PolicySource::Baseline(BaselineSpec::Random) => ("random_0".to_string(), "random".to_string()),
        PolicySource::Checkpoint(_) => (format!("{}_0", policy.algorithm()), policy.algorithm().to_string()),
    };
    create_dir(out_dir)?;
    let mut report = evaluate(policy.as_mut(), &cfg.env, &cfg.eval, cfg.seed, &label, &group, out_dir)?;
    report.source = source.to_string();
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}
