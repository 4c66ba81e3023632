//! `market-rl`: train, evaluate and compare production agents.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use market_rl::algos::BaselineSpec;
use market_rl::harness::{
    cmd_compare, cmd_eval, cmd_replicate, cmd_train, ExperimentConfig, HarnessError, PolicySource, Preset,
};
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: u8 = 1;
const RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "market-rl", version, about = "Reinforcement-learning agents for a simulated production market")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "MARKET_RL_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one agent and write metrics and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Algorithm name (ppo, a2c, dqn).
        #[arg(long)]
        algo: Option<String>,
        /// Total environment steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate a checkpoint or baseline spec greedily and write traces.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path, `fixed:<k>` or `random`.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a baseline: `fixed:<k>` or `random`.
    Baseline {
        #[command(flatten)]
        common: Common,
        spec: BaselineSpec,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train and evaluate the full agent roster and write a hashed manifest.
    Replicate {
        #[command(flatten)]
        common: Common,
        /// Named scale (desk, full); ignored when --config is given.
        #[arg(long, conflicts_with = "config")]
        preset: Option<Preset>,
        /// Write the manifest without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Compare evaluation reports across groups with t-tests.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Report files, replicate directories or directories to search.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Groups tested against the baselines; defaults to every trained group.
        #[arg(long, value_delimiter = ',')]
        drl: Option<Vec<String>>,
        /// Reference mean for the one-sample test.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        mu0: f64,
    },
}

fn load(common: &Common, preset: Option<Preset>) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(preset.unwrap_or(Preset::Desk)),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = cfg.resolve_output(common.out.as_deref(), None);
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, algo, steps } => {
            let (mut cfg, out) = load(&common, None)?;
            if let Some(algo) = algo {
                cfg.algo.name = algo;
            }
            if let Some(steps) = steps {
                cfg.train.total_steps = steps;
            }
            let outcome = cmd_train(&cfg, &out)?;
            println!(
                "trained {} for {} steps ({} updates) -> {}",
                cfg.algo.name,
                outcome.checkpoint.env_steps,
                outcome.metrics.len(),
                outcome.checkpoint_path.display()
            );
        }
        Command::Eval { common, policy, horizon, episodes } => {
            let source: PolicySource = policy.parse()?;
            evaluate(&common, &source, horizon, episodes)?;
        }
        Command::Baseline { common, spec, horizon, episodes } => {
            evaluate(&common, &PolicySource::Baseline(spec), horizon, episodes)?;
        }
        Command::Replicate { common, preset, dry_run } => {
            let (mut cfg, out) = load(&common, preset)?;
            cfg.replicate.dry_run |= dry_run;
            let manifest = cmd_replicate(&cfg, &out)?;
            println!(
                "{} agents, {} reports, {} files -> {}",
                manifest.roster.len(),
                manifest.reports.len(),
                manifest.files.len(),
                out.join("manifest.json").display()
            );
        }
        Command::Compare { common, reports, drl, mu0 } => {
            let (_, out) = load(&common, None)?;
            let report = cmd_compare(&reports, drl.as_deref(), mu0, &out)?;
            for (group, s) in &report.groups {
                println!("{group:>8}  n={:<3} mean={:.3}", s.n, s.mean);
            }
            for test in &report.tests {
                match (&test.result, &test.error) {
                    (Some(r), _) => println!(
                        "{}: t={:.4} dof={:.2} p={:.4}",
                        test.name, r.t_statistic, r.degrees_of_freedom, r.p_value
                    ),
                    (None, Some(e)) => println!("{}: {e}", test.name),
                    (None, None) => {}
                }
            }
        }
    }
    Ok(())
}

fn evaluate(common: &Common, source: &PolicySource, horizon: Option<u64>, episodes: Option<usize>) -> Result<()> {
    let (mut cfg, out) = load(common, None)?;
    if let Some(h) = horizon {
        cfg.eval.horizon = h;
    }
    if let Some(n) = episodes {
        cfg.eval.episodes = n;
    }
    let report = cmd_eval(&cfg, source, &out).with_context(|| format!("evaluating {source}"))?;
    println!(
        "{}: mean cumulative profit {:.3} over {} episodes -> {}",
        report.label,
        report.mean_profit(),
        report.episodes.len(),
        out.join("report.json").display()
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HarnessError>() {
        Some(e) if e.is_usage() => USAGE,
        _ => RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
