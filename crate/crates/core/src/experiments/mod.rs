//! Seeded Monte Carlo experiments with reproducible artifacts.
//!
//! An [`ExperimentConfig`] names one of the runners, the matrix model and
//! the pass/fail bands. [`run_experiment`] draws the replicas in parallel,
//! merges them in replica order and evaluates the bands against the
//! derived metrics. [`RunResult::write`] produces `manifest.json`,
//! `raw.csv` and `summary.json`.

mod config;
mod runners;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::stats::{self, SummaryStats};
use crate::{rng, Error, Result};

pub use config::{Band, EnergySpec, ExperimentConfig, ExperimentKind, IndexSpec, Regime, TestFunctionSpec};
pub use runners::build_profile;

/// One replica row of the raw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub n: usize,
    pub replica: usize,
    pub values: Vec<f64>,
}

/// Per-dimension summary of every statistic column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub used: usize,
    pub discarded: usize,
    pub stats: BTreeMap<String, SummaryStats>,
    /// Sample covariance of the statistic columns, in column order.
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub columns: Vec<String>,
    pub raw: Vec<RawRow>,
    pub groups: Vec<GroupSummary>,
    pub derived: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub flags: Vec<String>,
    pub warnings: Vec<String>,
    pub wall_clock_secs: f64,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    experiment: &'a str,
    config_hash: &'a str,
    passed: bool,
    groups: &'a [GroupSummary],
    derived: &'a BTreeMap<String, f64>,
    checks: &'a [CheckResult],
    flags: &'a [String],
    warnings: &'a [String],
    wall_clock_secs: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    config_hash: &'a str,
    raw_sha256: String,
    summary_sha256: String,
    crate_name: &'static str,
    crate_version: &'static str,
}

impl RunResult {
    /// All declared criteria hold (vacuously true without criteria).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn group(&self, n: usize) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.n == n)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.derived.get(name).copied()
    }

    /// Values of one statistic column for dimension `n`, in replica order.
    pub fn column(&self, n: usize, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.raw.iter().filter(|r| r.n == n).map(|r| r.values[j]).collect())
    }

    pub fn raw_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["n".to_string(), "replica".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for r in &self.raw {
            let mut rec = vec![r.n.to_string(), r.replica.to_string()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SummaryFile {
            experiment: self.config.experiment.tag(),
            config_hash: &self.config_hash,
            passed: self.passed(),
            groups: &self.groups,
            derived: &self.derived,
            checks: &self.checks,
            flags: &self.flags,
            warnings: &self.warnings,
            wall_clock_secs: self.wall_clock_secs,
        })?)
    }

    /// Write `manifest.json`, `raw.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let raw = self.raw_csv()?;
        let summary = self.summary_json()?;
        let manifest = Manifest {
            experiment: self.config.experiment.tag(),
            config: &self.config,
            config_hash: &self.config_hash,
            raw_sha256: sha256_hex(raw.as_bytes()),
            summary_sha256: sha256_hex(summary.as_bytes()),
            crate_name: env!("CARGO_PKG_NAME"),
            crate_version: env!("CARGO_PKG_VERSION"),
        };
        fs::write(dir.join("raw.csv"), raw)?;
        fs::write(dir.join("summary.json"), summary)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the configuration with the output location removed.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out_dir = None;
    Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
}

/// Replicas of one dimension after the ordered merge.
pub(crate) struct Group {
    pub n: usize,
    pub rows: Vec<(usize, Vec<f64>)>,
    pub discarded: usize,
}

impl Group {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|(_, v)| v[j]).collect()
    }
}

/// Replica-level outcome.
pub(crate) enum Replica {
    Used(Vec<f64>),
    Discarded,
}

pub(crate) trait Runner: Sync {
    fn columns(&self) -> Vec<String>;
    fn replica(&self, n: usize, seed: u64) -> Result<Replica>;
    fn derive(&self, groups: &[Group], columns: &[String], out: &mut BTreeMap<String, f64>) -> Result<()>;
    fn flags(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Run an experiment on a pool of `threads` workers (default: all cores).
/// The raw statistics do not depend on the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunResult> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let runner = runners::build(cfg)?;
    let columns = runner.columns();
    let seed = cfg.seed.ok_or_else(|| Error::Config("seed is mandatory".into()))?;
    let tag = cfg.experiment.tag();
    let mut groups = Vec::new();
    for &n in &cfg.n {
        let outcomes: Vec<Result<Replica>> = (0..cfg.samples)
            .into_par_iter()
            .map(|r| runner.replica(n, rng::derive(seed, tag, &[n as u64, r as u64])))
            .collect();
        let mut rows = Vec::new();
        let mut discarded = 0;
        for (r, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(Replica::Used(v)) => {
                    debug_assert_eq!(v.len(), columns.len());
                    rows.push((r, v));
                }
                Ok(Replica::Discarded) | Err(Error::Collision { .. }) => discarded += 1,
                Err(e) => return Err(e),
            }
        }
        groups.push(Group { n, rows, discarded });
    }

    let mut derived = BTreeMap::new();
    runner.derive(&groups, &columns, &mut derived)?;
    let total: usize = groups.iter().map(|g| g.discarded).sum();
    derived.insert("discard_rate".into(), total as f64 / (cfg.samples * cfg.n.len()) as f64);

    let mut summaries = Vec::new();
    let mut raw = Vec::new();
    for g in &groups {
        let cols: Vec<Vec<f64>> = (0..columns.len()).map(|j| g.column(j)).collect();
        let mut st = BTreeMap::new();
        if !g.rows.is_empty() {
            for (name, c) in columns.iter().zip(&cols) {
                st.insert(name.clone(), stats::summarize(c)?);
            }
        }
        summaries.push(GroupSummary {
            n: g.n,
            used: g.rows.len(),
            discarded: g.discarded,
            stats: st,
            covariance: if g.rows.len() > 1 {
                stats::covariance_matrix(&cols)
            } else {
                Vec::new()
            },
        });
        raw.extend(g.rows.iter().map(|(r, v)| RawRow {
            n: g.n,
            replica: *r,
            values: v.clone(),
        }));
    }

    let checks = cfg
        .criteria
        .iter()
        .map(|(name, band)| {
            let value = derived.get(name).copied().unwrap_or(f64::NAN);
            CheckResult {
                name: name.clone(),
                value,
                lo: band.lo,
                hi: band.hi,
                pass: band.contains(value),
            }
        })
        .collect();

    let mut warnings = Vec::new();
    if cfg.samples < 30 {
        warnings.push(format!("only {} replicas; standard errors are unreliable", cfg.samples));
    }
    if let Some(target) = cfg.se_target {
        for g in &summaries {
            for (name, s) in &g.stats {
                let se = (s.variance / s.count as f64).sqrt();
                if se > target {
                    warnings.push(format!(
                        "n = {}: standard error of {name} is {se:.3e} > target {target:.3e}",
                        g.n
                    ));
                }
            }
        }
    }
    if total > 0 {
        warnings.push(format!("{total} replica(s) discarded"));
    }

    Ok(RunResult {
        config: cfg.clone(),
        config_hash: config_hash(cfg)?,
        columns,
        raw,
        groups: summaries,
        derived,
        checks,
        flags: runner.flags(),
        warnings,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Render a `summary.json` document as a plain text table.
pub fn render_report(summary: &serde_json::Value) -> Result<String> {
    use std::fmt::Write;
    let get = |k: &str| {
        summary
            .get(k)
            .ok_or_else(|| Error::Config(format!("summary.json lacks '{k}'")))
    };
    let mut out = String::new();
    let exp = get("experiment")?.as_str().unwrap_or("?");
    let passed = get("passed")?.as_bool().unwrap_or(false);
    let _ = writeln!(
        out,
        "experiment: {exp}   config hash: {}",
        get("config_hash")?.as_str().unwrap_or("?")
    );
    let _ = writeln!(out, "overall: {}", if passed { "PASS" } else { "FAIL" });
    let num = |v: &serde_json::Value| match v.as_f64() {
        Some(x) => format!("{x:.6}"),
        None => "nan".to_string(),
    };
    for g in get("groups")?.as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "\nn = {}  (used {}, discarded {})",
            g["n"], g["used"], g["discarded"]
        );
        let _ = writeln!(
            out,
            "{:<28} {:>14} {:>14} {:>10} {:>10}",
            "statistic", "mean", "variance", "skew", "ks"
        );
        if let Some(st) = g["stats"].as_object() {
            for (name, s) in st {
                let _ = writeln!(
                    out,
                    "{:<28} {:>14} {:>14} {:>10} {:>10}",
                    name,
                    num(&s["mean"]),
                    num(&s["variance"]),
                    num(&s["skewness"]),
                    num(&s["ks_normal"])
                );
            }
        }
    }
    if let Some(d) = get("derived")?.as_object() {
        let _ = writeln!(out, "\n{:<40} {:>16}", "metric", "value");
        for (k, v) in d {
            let _ = writeln!(out, "{:<40} {:>16}", k, num(v));
        }
    }
    let checks = get("checks")?.as_array().cloned().unwrap_or_default();
    if !checks.is_empty() {
        let _ = writeln!(
            out,
            "\n{:<40} {:>14} {:>12} {:>12}  result",
            "criterion", "value", "lo", "hi"
        );
        for c in checks {
            let bound = |v: &serde_json::Value| if v.is_null() { "-".to_string() } else { num(v) };
            let _ = writeln!(
                out,
                "{:<40} {:>14} {:>12} {:>12}  {}",
                c["name"].as_str().unwrap_or("?"),
                num(&c["value"]),
                bound(&c["lo"]),
                bound(&c["hi"]),
                if c["pass"].as_bool() == Some(true) {
                    "PASS"
                } else {
                    "FAIL"
                }
            );
        }
    }
    for key in ["flags", "warnings"] {
        for f in summary.get(key).and_then(|v| v.as_array()).into_iter().flatten() {
            let _ = writeln!(out, "{key}: {}", f.as_str().unwrap_or("?"));
        }
    }
    Ok(out)
}
