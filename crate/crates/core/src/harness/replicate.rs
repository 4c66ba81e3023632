use super::eval::PolicySource;
use super::train::{agent_seed, train_agent};
use super::{create_dir, evaluate, io_err, sha256_file, write_json, EvalReport, ExperimentConfig, HarnessError};
use crate::algos::BaselineSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    Trained { algorithm: String, seed: u64 },
    Fixed { units: u32 },
    Random { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub label: String,
    pub group: String,
    #[serde(flatten)]
    pub kind: AgentKind,
    /// Derived training seed for trained agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the experiment directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub seed_scheme: String,
    pub dry_run: bool,
    pub total_steps: u64,
    pub n_envs: usize,
    pub eval_horizon: u64,
    pub eval_episodes: usize,
    pub roster: Vec<RosterEntry>,
    pub reports: Vec<String>,
    pub files: Vec<FileEntry>,
    pub config: ExperimentConfig,
}

fn roster(cfg: &ExperimentConfig) -> Vec<RosterEntry> {
    let r = &cfg.replicate;
    let mut out = Vec::new();
    for (algorithm, seeds) in [("ppo", &r.ppo_seeds), ("dqn", &r.dqn_seeds), ("a2c", &r.a2c_seeds)] {
        for &seed in seeds {
            out.push(RosterEntry {
                label: format!("{algorithm}_{seed}"),
                group: algorithm.to_string(),
                kind: AgentKind::Trained {
                    algorithm: algorithm.to_string(),
                    seed,
                },
                agent_seed: Some(agent_seed(cfg.seed, algorithm, seed)),
                checkpoint: None,
                report: None,
            });
        }
    }
    for &units in &r.fixed_units {
        out.push(RosterEntry {
            label: format!("fixed_{units}"),
            group: "fixed".into(),
            kind: AgentKind::Fixed { units },
            agent_seed: None,
            checkpoint: None,
            report: None,
        });
    }
    for index in 0..r.random_agents {
        out.push(RosterEntry {
            label: format!("random_{index}"),
            group: "random".into(),
            kind: AgentKind::Random { index },
            agent_seed: None,
            checkpoint: None,
            report: None,
        });
    }
    out
}

/// Hyperparameters for `algorithm` inside a replicate run.
fn algo_config(cfg: &ExperimentConfig, algorithm: &str) -> serde_json::Value {
    let r = &cfg.replicate;
    let specific = match algorithm {
        "ppo" => &r.ppo_config,
        "dqn" => &r.dqn_config,
        _ => &r.a2c_config,
    };
    if specific.is_null() && cfg.algo.name == algorithm {
        cfg.algo.config.clone()
    } else {
        specific.clone()
    }
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join("manifest.json") {
            out.push(path);
        }
    }
    Ok(())
}

fn hash_tree(root: &Path) -> Result<Vec<FileEntry>, HarnessError> {
    let mut paths = Vec::new();
    collect_files(root, root, &mut paths)?;
    let mut files = paths
        .iter()
        .map(|p| {
            Ok(FileEntry {
                path: relative(root, p),
                sha256: sha256_file(p)?,
                bytes: std::fs::metadata(p).map_err(io_err(p))?.len(),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(files)
}

/// Trains the roster's learning agents, evaluates every agent, and writes
/// `manifest.json` listing each artifact with its SHA-256.
pub fn cmd_replicate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, HarnessError> {
    cfg.validate()?;
    create_dir(out_dir)?;
    write_json(&out_dir.join("config.json"), cfg)?;
    let mut entries = roster(cfg);

    if !cfg.replicate.dry_run {
        entries
            .par_iter_mut()
            .filter(|e| matches!(e.kind, AgentKind::Trained { .. }))
            .try_for_each(|entry| -> Result<(), HarnessError> {
                let AgentKind::Trained { algorithm, .. } = &entry.kind else {
                    return Ok(());
                };
                let dir = out_dir.join("train").join(&entry.label);
                let seed = entry.agent_seed.unwrap_or_default();
                let outcome = train_agent(&cfg.env, &cfg.train, algorithm, &algo_config(cfg, algorithm), seed, &dir)?;
                entry.checkpoint = Some(relative(out_dir, &outcome.checkpoint_path));
                Ok(())
            })?;

        let reports = entries
            .par_iter()
            .map(|entry| -> Result<EvalReport, HarnessError> {
                let source = match &entry.kind {
                    AgentKind::Trained { .. } => {
                        PolicySource::Checkpoint(out_dir.join(entry.checkpoint.as_deref().unwrap_or_default()))
                    }
                    AgentKind::Fixed { units } => PolicySource::Baseline(BaselineSpec::Fixed(*units)),
                    AgentKind::Random { .. } => PolicySource::Baseline(BaselineSpec::Random),
                };
                let mut policy = source.load(&cfg.env)?;
                let dir = out_dir.join("eval").join(&entry.label);
                create_dir(&dir)?;
                let mut report =
                    evaluate(policy.as_mut(), &cfg.env, &cfg.eval, cfg.seed, &entry.label, &entry.group, &dir)?;
                report.source = match &source {
                    PolicySource::Checkpoint(p) => relative(out_dir, p),
                    other => other.to_string(),
                };
                write_json(&dir.join("report.json"), &report)?;
                Ok(report)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (entry, report) in entries.iter_mut().zip(&reports) {
            entry.report = Some(format!("eval/{}/report.json", report.label));
        }
    }

    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        master_seed: cfg.seed,
        seed_scheme: "sha256(parent_le || label)[0..8] little-endian, label path agent/<algorithm>/<seed> \
                      then init|env|learn; evaluation episodes eval/episode/<e>"
            .into(),
        dry_run: cfg.replicate.dry_run,
        total_steps: cfg.train.total_steps,
        n_envs: cfg.train.n_envs,
        eval_horizon: cfg.eval.horizon,
        eval_episodes: cfg.eval.episodes,
        reports: entries.iter().filter_map(|e| e.report.clone()).collect(),
        roster: entries,
        files: hash_tree(out_dir)?,
        config: cfg.clone(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
