//! Command-line front end.
//!
//! Every subcommand shares the same flag set. A `--config` JSON file (the
//! experiment schema) supplies defaults and flags override it. The resolved
//! settings are echoed to standard error as JSON that can be fed back with
//! `--config`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clt::{self, PredictionRow, TestFunction};
use crate::dbm::{self, DtPolicy, StorePolicy};
use crate::ensemble::{self, EntryLaw, SymmetryClass};
use crate::experiments::{
    self, Band, EnergySpec, ExperimentConfig, ExperimentKind, IndexSpec, Regime, TestFunctionSpec,
};
use crate::{qve, spectral, Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CRITERIA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rmt-logfield",
    version,
    about = "Wigner matrices, Dyson Brownian motion and log-correlated CLT experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one matrix and write it as JSON.
    Sample(Common),
    /// Eigenvalues of one matrix (CSV with --out).
    Spectrum(Common),
    /// Dyson Brownian motion started from the eigenvalues of one matrix.
    Dbm(Common),
    /// Quadratic vector equation: density or solution at E + i·eta.
    Qve {
        #[arg(value_enum)]
        what: QveWhat,
        #[command(flatten)]
        common: Common,
        /// Imaginary part for `solve`.
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
    },
    /// Analytic predictions.
    Predict {
        #[arg(value_enum)]
        what: PredictWhat,
        #[command(flatten)]
        common: Common,
        /// Polynomial coefficients c0,c1,... for `variance` and `expectation`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        coeffs: Vec<f64>,
    },
    /// Run a Monte Carlo experiment.
    Experiment {
        /// Experiment name (overrides the config file).
        #[arg(long)]
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a summary.json (or a run directory) as a text table.
    Report { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QveWhat {
    Density,
    Solve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictWhat {
    Delta,
    Exponents,
    Variance,
    Expectation,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Dimension (repeat for a ladder).
    #[arg(long)]
    pub n: Vec<usize>,
    /// Replicas per dimension.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub beta: Option<u8>,
    /// goe, gue, uniform, circulant:<b>, two_block:<within>:<between>
    #[arg(long)]
    pub profile: Option<String>,
    /// gaussian, rademacher or uniform
    #[arg(long)]
    pub law: Option<String>,
    /// Energy, or edge:<p> for 2 - n^-p (repeatable).
    #[arg(long, allow_hyphen_values = true)]
    pub energy: Vec<String>,
    /// Eigenvalue index, or n/<d> (repeatable).
    #[arg(long)]
    pub index: Vec<String>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Master seed (mandatory for anything random).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Settings with every field optional, in the experiment config schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<EnergySpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<IndexSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_steps: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_functions: Option<Vec<TestFunctionSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_law: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<BTreeMap<String, Band>>,
}

impl Settings {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))
    }

    /// Config file values overridden by flags.
    pub fn resolve(c: &Common) -> Result<Self> {
        let mut s = match &c.config {
            Some(p) => Self::load(p)?,
            None => Settings::default(),
        };
        if !c.n.is_empty() {
            s.n = Some(if c.n.len() == 1 {
                c.n[0].into()
            } else {
                c.n.clone().into()
            });
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if c.$f.is_some() { s.$f = c.$f.clone(); } )* };
        }
        take!(samples, beta, profile, law, t, gamma, seed);
        if !c.energy.is_empty() {
            s.energies = Some(c.energy.iter().map(|e| EnergySpec::parse(e)).collect::<Result<_>>()?);
        }
        if !c.index.is_empty() {
            s.indices = Some(c.index.iter().map(|k| IndexSpec::parse(k)).collect::<Result<_>>()?);
        }
        if c.out.is_some() {
            s.out_dir = c.out.clone();
        }
        Ok(s)
    }

    pub fn ns(&self) -> Result<Vec<usize>> {
        match &self.n {
            None => Ok(Vec::new()),
            Some(v) => match v {
                serde_json::Value::Array(_) => serde_json::from_value(v.clone()),
                _ => serde_json::from_value(v.clone()).map(|n: usize| vec![n]),
            }
            .map_err(|_| Error::Config(format!("bad n: {v}"))),
        }
    }

    fn n(&self) -> Result<usize> {
        let ns = self.ns()?;
        match ns.as_slice() {
            [n] => Ok(*n),
            [] => Err(Error::Config("--n is required".into())),
            _ => Err(Error::Config("this subcommand takes a single --n".into())),
        }
    }

    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("--seed is required (seeds are never generated implicitly)".into()))
    }

    fn beta(&self) -> u8 {
        self.beta.unwrap_or(1)
    }

    fn law(&self) -> Result<EntryLaw> {
        EntryLaw::parse(self.law.as_deref().unwrap_or("gaussian"))
    }

    fn profile_label(&self) -> String {
        self.profile
            .clone()
            .unwrap_or_else(|| if self.beta() == 2 { "gue" } else { "goe" }.into())
    }

    fn energies(&self, n: usize) -> Vec<f64> {
        self.energies
            .as_ref()
            .map(|es| es.iter().map(|e| e.at(n)).collect())
            .unwrap_or_default()
    }

    pub fn into_experiment(self) -> Result<ExperimentConfig> {
        if self.experiment.is_none() {
            return Err(Error::Config(
                "no experiment named (use --experiment or the config file)".into(),
            ));
        }
        if self.seed.is_none() {
            return Err(Error::Config(
                "--seed is required (seeds are never generated implicitly)".into(),
            ));
        }
        let v = serde_json::to_value(&self)?;
        let cfg: ExperimentConfig =
            serde_json::from_value(v).map_err(|e| Error::Config(format!("incomplete experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse and run; returns the process exit code.
pub fn run<I, T, W, E>(args: I, out: &mut W, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn echo<E: Write>(s: &Settings, err: &mut E) -> Result<()> {
    writeln!(err, "resolved config: {}", serde_json::to_string(s)?)?;
    Ok(())
}

fn dispatch<W: Write, E: Write>(cmd: Command, out: &mut W, err: &mut E) -> Result<i32> {
    match cmd {
        Command::Sample(c) => {
            let s = Settings::resolve(&c)?;
            echo(&s, err)?;
            let (n, seed) = (s.n()?, s.seed()?);
            let profile = experiments_profile(&s.profile_label(), n)?;
            let m = ensemble::sample_matrix(&profile, s.law()?, SymmetryClass::from_beta(s.beta())?, seed);
            let frob: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| m.entry(i, j).norm_sqr())
                .sum();
            writeln!(
                out,
                "n        {n}\nprofile  {}\nlaw      {}\nbeta     {}",
                s.profile_label(),
                s.law()?.label(),
                s.beta()
            )?;
            writeln!(out, "trace    {:.6}\ntr H^2   {:.6}", m.trace(), frob)?;
            if let Some(p) = &s.out_dir {
                fs::write(p, serde_json::to_string(&m)?)?;
                writeln!(out, "wrote    {}", p.display())?;
            }
            Ok(EXIT_OK)
        }
        Command::Spectrum(c) => {
            let s = Settings::resolve(&c)?;
            echo(&s, err)?;
            let spec = draw_spectrum(&s)?;
            let l = &spec.lambdas;
            writeln!(
                out,
                "n        {}\nmin      {:.6}\nmax      {:.6}",
                spec.n,
                l[0],
                l[l.len() - 1]
            )?;
            writeln!(out, "mean     {:.6}", l.iter().sum::<f64>() / l.len() as f64)?;
            if let Some(p) = &s.out_dir {
                spec.write_csv(fs::File::create(p)?)?;
                writeln!(out, "wrote    {}", p.display())?;
            }
            Ok(EXIT_OK)
        }
        Command::Dbm(c) => {
            let s = Settings::resolve(&c)?;
            echo(&s, err)?;
            let spec = draw_spectrum(&s)?;
            let t = s.t.unwrap_or(0.1);
            let policy = DtPolicy {
                store: StorePolicy::FinalOnly,
                ..DtPolicy::default()
            };
            let path = dbm::run_dbm(
                &spec.lambdas,
                s.beta(),
                t,
                &policy,
                crate::rng::derive(s.seed()?, "cli-dbm", &[]),
            )?;
            let last = path.particles.last().expect("final state");
            writeln!(
                out,
                "n          {}\nt          {t}\nsteps      {}\nsplits     {}",
                path.n, path.steps, path.splits
            )?;
            writeln!(
                out,
                "rigidity   {:.4}",
                dbm::rigidity_of(path.n, std::iter::once(last.as_slice()))
            )?;
            if let Some(p) = &s.out_dir {
                path.write_csv(fs::File::create(p)?)?;
                writeln!(out, "wrote      {}", p.display())?;
            }
            Ok(EXIT_OK)
        }
        Command::Qve { what, common, eta } => {
            let s = Settings::resolve(&common)?;
            echo(&s, err)?;
            let n = s.n()?;
            let profile = experiments_profile(&s.profile_label(), n)?;
            let es = s.energies(n);
            if es.is_empty() {
                return Err(Error::Config("--energy is required".into()));
            }
            match what {
                QveWhat::Density => {
                    writeln!(out, "{:>12} {:>14}", "energy", "density")?;
                    for e in es {
                        let d = qve::density(&profile, e, &qve::default_eta_sequence())?;
                        writeln!(out, "{e:>12.6} {:>14.8}", d.rho)?;
                    }
                }
                QveWhat::Solve => {
                    writeln!(
                        out,
                        "{:>12} {:>12} {:>14} {:>14} {:>10}",
                        "energy", "eta", "Re <m>", "Im <m>", "iters"
                    )?;
                    for e in es {
                        let sol = qve::solve(&profile, Complex64::new(e, eta), 1e-12)?;
                        let m = sol.mean();
                        writeln!(
                            out,
                            "{e:>12.6} {eta:>12.3e} {:>14.8} {:>14.8} {:>10}",
                            m.re, m.im, sol.iterations
                        )?;
                        if let Some(p) = &s.out_dir {
                            fs::write(p, serde_json::to_string(&sol)?)?;
                        }
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Predict { what, common, coeffs } => {
            let s = Settings::resolve(&common)?;
            echo(&s, err)?;
            predict(what, &s, &coeffs, out)
        }
        Command::Experiment { experiment, common } => {
            let mut s = Settings::resolve(&common)?;
            if let Some(e) = experiment {
                s.experiment = Some(ExperimentKind::parse(&e)?);
            }
            echo(&s, err)?;
            let cfg = s.into_experiment()?;
            let result = experiments::run_experiment(&cfg, common.threads)?;
            if let Some(dir) = &cfg.out_dir {
                result.write(dir)?;
            }
            let summary: serde_json::Value = serde_json::from_str(&result.summary_json()?)?;
            write!(out, "{}", experiments::render_report(&summary)?)?;
            Ok(if result.passed() { EXIT_OK } else { EXIT_CRITERIA })
        }
        Command::Report { path } => {
            let p = if path.is_dir() { path.join("summary.json") } else { path };
            let text =
                fs::read_to_string(&p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad summary {}: {e}", p.display())))?;
            write!(out, "{}", experiments::render_report(&v)?)?;
            Ok(EXIT_OK)
        }
    }
}

fn experiments_profile(label: &str, n: usize) -> Result<ensemble::VarianceProfile> {
    experiments::build_profile(label, n)
}

fn draw_spectrum(s: &Settings) -> Result<spectral::Spectrum> {
    let (n, seed) = (s.n()?, s.seed()?);
    let profile = experiments_profile(&s.profile_label(), n)?;
    let m = ensemble::sample_matrix(&profile, s.law()?, SymmetryClass::from_beta(s.beta())?, seed);
    spectral::eigenvalues(&m)
}

fn predict<W: Write>(what: PredictWhat, s: &Settings, coeffs: &[f64], out: &mut W) -> Result<i32> {
    let n = s.n()?;
    let beta = s.beta();
    let es = s.energies(n);
    let mut rows = Vec::new();
    match what {
        PredictWhat::Delta => {
            if es.is_empty() {
                return Err(Error::Config("--energy is required".into()));
            }
            for e in es {
                let d = clt::delta_shift(e, n, beta)?;
                writeln!(out, "{d:.10}")?;
                rows.push(PredictionRow {
                    quantity: "delta".into(),
                    inputs: format!("E={e};n={n};beta={beta}"),
                    value: d,
                    band: 0.0,
                });
            }
        }
        PredictWhat::Exponents => {
            let ks: Option<Vec<usize>> = s.indices.as_ref().map(|v| v.iter().map(|k| k.at(n)).collect());
            let ce = clt::covariance_exponents(&es, n, beta, ks.as_deref())?;
            let mut grid = |name: &str, g: &[Vec<f64>]| -> Result<()> {
                writeln!(out, "{name}:")?;
                for (i, row) in g.iter().enumerate() {
                    let line: Vec<String> = row.iter().map(|x| format!("{x:10.6}")).collect();
                    writeln!(out, "  {}", line.join(" "))?;
                    for (j, x) in row.iter().enumerate() {
                        rows.push(PredictionRow {
                            quantity: format!("{name}_{i}_{j}"),
                            inputs: format!("n={n};beta={beta}"),
                            value: *x,
                            band: 0.0,
                        });
                    }
                }
                Ok(())
            };
            grid("a", &ce.a)?;
            grid("b", &ce.b)?;
            if let Some(c) = &ce.c {
                grid("c", c)?;
            }
        }
        PredictWhat::Variance | PredictWhat::Expectation => {
            let coeffs = if coeffs.is_empty() {
                vec![0.0, 1.0]
            } else {
                coeffs.to_vec()
            };
            let f = TestFunction::polynomial(&coeffs)?;
            let profile = experiments_profile(&s.profile_label(), n)?;
            let law = s.law()?;
            let inputs = format!("coeffs={coeffs:?};n={n};beta={beta};law={}", law.label());
            if what == PredictWhat::Variance {
                let b = clt::variance_gw(&f, &profile, law, beta)?;
                for (k, v) in [
                    ("main", b.main),
                    ("trace_s", b.trace_s_term),
                    ("quartic", b.quartic_term),
                    ("epsilon_diag", b.epsilon_diag),
                    ("epsilon_band", b.epsilon_band),
                    ("estimate", b.estimate()),
                ] {
                    writeln!(out, "{k:<14} {v:>16.10}")?;
                    rows.push(PredictionRow {
                        quantity: k.into(),
                        inputs: inputs.clone(),
                        value: v,
                        band: b.epsilon_band,
                    });
                }
            } else {
                let e = clt::expectation_terms(&f, &profile, law)?;
                for (k, v) in [
                    ("delta_gw", e.delta_gw_leading),
                    ("boundary", e.boundary_term),
                    ("s_ii", e.s_ii_term),
                    ("quartic", e.quartic_term),
                    ("total", e.total),
                ] {
                    writeln!(out, "{k:<14} {v:>16.10}")?;
                    rows.push(PredictionRow {
                        quantity: k.into(),
                        inputs: inputs.clone(),
                        value: v,
                        band: 0.0,
                    });
                }
            }
        }
    }
    if let Some(p) = &s.out_dir {
        clt::write_predictions_csv(&rows, fs::File::create(p)?)?;
    }
    Ok(EXIT_OK)
}

/// Help text of the top level or of one subcommand, as printed by `--help`.
pub fn help_text(subcommand: Option<&str>) -> String {
    let mut args = vec!["rmt-logfield".to_string()];
    if let Some(s) = subcommand {
        args.push(s.to_string());
    }
    args.push("--help".into());
    let mut out = Vec::new();
    let mut err = Vec::new();
    run(args, &mut out, &mut err);
    String::from_utf8(out).expect("utf-8 help")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["rmt-logfield"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn predict_delta_at_edge() {
        let (code, out, _) = call(&["predict", "delta", "--beta", "1", "--energy", "2", "--n", "1000"]);
        assert_eq!(code, 0);
        assert!(out.trim().starts_with("-1.15129"), "{out}");
    }

    #[test]
    fn qve_uniform_density() {
        let (code, out, _) = call(&["qve", "density", "--profile", "uniform", "--n", "512", "--energy", "0"]);
        assert_eq!(code, 0);
        let v: f64 = out
            .lines()
            .nth(1)
            .unwrap()
            .split_whitespace()
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert!((v - 1.0 / std::f64::consts::PI).abs() < 1e-4, "{v}");
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["sample", "--n", "16"]).0, EXIT_USAGE);
        assert_eq!(call(&["sample", "--n", "16", "--seed", "1", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(
            call(&["experiment", "--experiment", "wegner", "--n", "16", "--samples", "2"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            call(&["sample", "--n", "16", "--seed", "1", "--law", "cauchy"]).0,
            EXIT_USAGE
        );
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"experiment":"wegner","n":16,"samples":3,"seed":5,"beta":2}"#).unwrap();
        let c = Common {
            config: Some(p),
            seed: Some(9),
            n: vec![32, 64],
            ..Common::default()
        };
        let s = Settings::resolve(&c).unwrap();
        assert_eq!(s.seed, Some(9));
        assert_eq!(s.beta, Some(2));
        assert_eq!(s.ns().unwrap(), vec![32, 64]);
        let cfg = s.into_experiment().unwrap();
        assert_eq!(cfg.n, vec![32, 64]);
    }

    #[test]
    fn sample_and_spectrum_run() {
        let (code, out, err) = call(&["sample", "--n", "16", "--seed", "3"]);
        assert_eq!(code, 0);
        assert!(out.contains("trace"));
        assert!(err.contains("resolved config"));
        let (code, out, _) = call(&["spectrum", "--n", "16", "--seed", "3", "--law", "rademacher"]);
        assert_eq!(code, 0);
        assert!(out.contains("max"));
    }

    #[test]
    fn help_is_success() {
        let (code, out, _) = call(&["experiment", "--help"]);
        assert_eq!(code, 0);
        for flag in [
            "--n",
            "--samples",
            "--beta",
            "--profile",
            "--law",
            "--energy",
            "--index",
            "--t",
            "--gamma",
            "--seed",
            "--out",
            "--config",
            "--threads",
        ] {
            assert!(out.contains(flag), "{flag}");
        }
    }
}
