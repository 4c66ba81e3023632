use super::replicate::Manifest;
use super::{create_dir, io_err, read_json, write_json, EvalReport, HarnessError};
use crate::env::TraceRow;
use crate::stats::{one_sample_t_test, quantile_sorted, welch_t_test, SampleSummary, TestResult};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Distribution of per-agent mean profits within one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
    pub variance: Option<f64>,
    pub std_dev: Option<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl GroupStats {
    fn new(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&sorted, p).unwrap_or(f64::NAN);
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = (n > 1).then(|| samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64);
        Some(Self {
            n,
            mean,
            variance,
            std_dev: variance.map(f64::sqrt),
            min: sorted[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    pub group: String,
    /// Comparison group for two-sample tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub against: Option<String>,
    /// Reference mean for one-sample tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    pub result: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub groups: BTreeMap<String, GroupStats>,
    pub tests: Vec<NamedTest>,
}

impl ComparisonReport {
    pub fn test(&self, name: &str) -> Option<&NamedTest> {
        self.tests.iter().find(|t| t.name == name)
    }
}

fn named(name: String, group: &str, against: Option<&str>, mu0: Option<f64>, r: Result<TestResult, String>) -> NamedTest {
    let (result, error) = match r {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e)),
    };
    NamedTest {
        name,
        group: group.to_string(),
        against: against.map(str::to_string),
        mu0,
        result,
        error,
    }
}

/// Group summaries plus, for each DRL group, one-sided Welch tests against
/// the `random` and `fixed` groups and a one-sample test against `mu0`.
pub fn compare_groups(
    samples: &BTreeMap<String, Vec<f64>>,
    drl_groups: &[String],
    mu0: f64,
) -> Result<ComparisonReport, HarnessError> {
    for g in drl_groups {
        if !samples.contains_key(g) {
            return Err(HarnessError::Config(format!("no reports in group `{g}`")));
        }
    }
    let groups = samples
        .iter()
        .filter_map(|(g, xs)| GroupStats::new(xs).map(|s| (g.clone(), s)))
        .collect();
    let summary = |g: &str| SampleSummary::from_samples(&samples[g]).map_err(|e| e.to_string());
    let mut tests = Vec::new();
    for g in drl_groups {
        for other in ["random", "fixed"] {
            if g != other && samples.contains_key(other) {
                let r = summary(g).and_then(|a| {
                    let b = summary(other)?;
                    welch_t_test(&a, &b).map_err(|e| e.to_string())
                });
                tests.push(named(format!("{g}_vs_{other}"), g, Some(other), None, r));
            }
        }
        let r = summary(g).and_then(|a| one_sample_t_test(&a, mu0).map_err(|e| e.to_string()));
        tests.push(named(format!("{g}_vs_mu0"), g, None, Some(mu0), r));
    }
    Ok(ComparisonReport { groups, tests })
}

/// Reports from files, experiment directories (via `manifest.json`), or
/// directories searched for `report.json`. Each comes with its directory.
pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<(EvalReport, PathBuf)>, HarnessError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let manifest_path = path.join("manifest.json");
            if manifest_path.is_file() {
                let manifest: Manifest = read_json(&manifest_path)?;
                files.extend(manifest.reports.iter().map(|r| path.join(r)));
            } else {
                find_reports(path, &mut files)?;
            }
        } else {
            files.push(path.clone());
        }
    }
    let mut out = files
        .into_iter()
        .map(|f| {
            let report: EvalReport = read_json(&f)?;
            let dir = f.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((report, dir))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    out.sort_by(|a, b| (&a.0.group, &a.0.label).cmp(&(&b.0.group, &b.0.label)));
    Ok(out)
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_reports(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "report.json") {
            out.push(path);
        }
    }
    Ok(())
}

fn read_rewards(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize::<TraceRow>()
        .map(|row| Ok(row?.reward))
        .collect()
}

/// Writes `comparison.json` and plot-ready CSVs to `out_dir`:
/// `plot_means.csv`, `plot_distribution.csv`, `plot_quartiles.csv`, and
/// `plot_cumulative.csv` (first-episode cumulative profit over time).
pub fn cmd_compare(
    reports: &[PathBuf],
    drl_groups: Option<&[String]>,
    mu0: f64,
    out_dir: &Path,
) -> Result<ComparisonReport, HarnessError> {
    let loaded = load_reports(reports)?;
    if loaded.is_empty() {
        return Err(HarnessError::Config("no evaluation reports found".into()));
    }
    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (r, _) in &loaded {
        samples.entry(r.group.clone()).or_default().push(r.mean_profit());
    }
    let drl: Vec<String> = match drl_groups {
        Some(g) => g.to_vec(),
        None => samples
            .keys()
            .filter(|g| *g != "random" && *g != "fixed")
            .cloned()
            .collect(),
    };
    let comparison = compare_groups(&samples, &drl, mu0)?;

    create_dir(out_dir)?;
    write_json(&out_dir.join("comparison.json"), &comparison)?;

    let mut means = csv::Writer::from_path(out_dir.join("plot_means.csv"))?;
    means.write_record(["group", "n", "mean", "std_dev"])?;
    let mut quartiles = csv::Writer::from_path(out_dir.join("plot_quartiles.csv"))?;
    quartiles.write_record(["group", "min", "q1", "median", "q3", "max"])?;
    for (g, s) in &comparison.groups {
        let sd = s.std_dev.map(|v| v.to_string()).unwrap_or_default();
        means.write_record([g.clone(), s.n.to_string(), s.mean.to_string(), sd])?;
        quartiles.write_record([
            g.clone(),
            s.min.to_string(),
            s.q1.to_string(),
            s.median.to_string(),
            s.q3.to_string(),
            s.max.to_string(),
        ])?;
    }
    means.flush().map_err(csv::Error::from)?;
    quartiles.flush().map_err(csv::Error::from)?;

    let mut dist = csv::Writer::from_path(out_dir.join("plot_distribution.csv"))?;
    dist.write_record(["group", "label", "mean_profit"])?;
    let mut cumulative = csv::Writer::from_path(out_dir.join("plot_cumulative.csv"))?;
    cumulative.write_record(["group", "label", "t", "cumulative_profit"])?;
    for (r, dir) in &loaded {
        dist.write_record([r.group.as_str(), r.label.as_str(), &r.mean_profit().to_string()])?;
        if let Some(first) = r.episodes.first() {
            let mut total = 0.0;
            for (t, reward) in read_rewards(&dir.join(&first.trace))?.into_iter().enumerate() {
                total += reward;
                cumulative.write_record([r.group.as_str(), r.label.as_str(), &t.to_string(), &total.to_string()])?;
            }
        }
    }
    dist.flush().map_err(csv::Error::from)?;
    cumulative.flush().map_err(csv::Error::from)?;
    Ok(comparison)
}
