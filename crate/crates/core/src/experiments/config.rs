use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use crate::ensemble::{EntryLaw, ProfileKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LogfieldClt,
    EigenvalueClt,
    Wegner,
    LocalLaw,
    Coupling,
    Advection,
    Smoothing,
    VarianceMatch,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::LogfieldClt,
        ExperimentKind::EigenvalueClt,
        ExperimentKind::Wegner,
        ExperimentKind::LocalLaw,
        ExperimentKind::Coupling,
        ExperimentKind::Advection,
        ExperimentKind::Smoothing,
        ExperimentKind::VarianceMatch,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            ExperimentKind::LogfieldClt => "logfield_clt",
            ExperimentKind::EigenvalueClt => "eigenvalue_clt",
            ExperimentKind::Wegner => "wegner",
            ExperimentKind::LocalLaw => "local_law",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::Advection => "advection",
            ExperimentKind::Smoothing => "smoothing",
            ExperimentKind::VarianceMatch => "variance_match",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }

    fn uses_dbm(&self) -> bool {
        matches!(self, ExperimentKind::Coupling | ExperimentKind::Advection)
    }
}

/// An energy, either fixed or `2 - n^{-p}` (just inside the upper edge).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergySpec {
    Value(f64),
    Edge { edge_exponent: f64 },
}

impl EnergySpec {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            EnergySpec::Value(e) => e,
            EnergySpec::Edge { edge_exponent } => 2.0 - (n as f64).powf(-edge_exponent),
        }
    }

    /// `0.5`, or `edge:0.4` for `2 - n^{-0.4}`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix("edge:") {
            let edge_exponent: f64 = p
                .parse()
                .map_err(|_| Error::Config(format!("bad edge exponent '{p}'")))?;
            return Ok(EnergySpec::Edge { edge_exponent });
        }
        s.parse()
            .map(EnergySpec::Value)
            .map_err(|_| Error::Config(format!("bad energy '{s}'")))
    }
}

/// An eigenvalue index, fixed or `round(fraction · n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndexSpec {
    Fixed(usize),
    Fraction { fraction: f64 },
}

impl IndexSpec {
    pub fn at(&self, n: usize) -> usize {
        match *self {
            IndexSpec::Fixed(k) => k,
            IndexSpec::Fraction { fraction } => (fraction * n as f64).round() as usize,
        }
    }

    /// `4`, or `n/2` for half the dimension.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(d) = s.strip_prefix("n/") {
            let d: f64 = d.parse().map_err(|_| Error::Config(format!("bad index '{s}'")))?;
            if !(d >= 1.0) {
                return Err(Error::Config(format!("bad index '{s}'")));
            }
            return Ok(IndexSpec::Fraction { fraction: 1.0 / d });
        }
        s.parse()
            .map(IndexSpec::Fixed)
            .map_err(|_| Error::Config(format!("bad index '{s}'")))
    }

    fn label(&self) -> String {
        match *self {
            IndexSpec::Fixed(k) => k.to_string(),
            IndexSpec::Fraction { fraction } => format!("{fraction}n"),
        }
    }
}

/// Closed pass band `lo ≤ value ≤ hi`; a missing side is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

impl Band {
    pub fn contains(&self, v: f64) -> bool {
        !v.is_nan() && self.lo.is_none_or(|lo| v >= lo) && self.hi.is_none_or(|hi| v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    /// `Σ c_k x^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// Gaussian bump at `e` of width `n^{-scale_exponent}`.
    Mesoscopic {
        e: f64,
        scale_exponent: f64,
    },
    LogRe {
        e: f64,
        gamma: f64,
    },
    LogIm {
        e: f64,
        gamma: f64,
    },
}

/// `𝒢_{ε,c}`: energies with `κ(E) < n^{-ε}` or `κ(E) ≥ c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub epsilon: f64,
    pub c: f64,
}

impl Default for Regime {
    fn default() -> Self {
        Regime { epsilon: 0.2, c: 0.5 }
    }
}

impl Regime {
    pub fn contains(&self, e: f64, n: usize) -> bool {
        let k = crate::spectral::kappa(e);
        e.abs() <= 2.0 && (k < (n as f64).powf(-self.epsilon) || k >= self.c)
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(n) => vec![n],
        OneOrMany::Many(v) => v,
    })
}

fn default_beta() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Dimension or dimension ladder.
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    /// Replicas per dimension.
    pub samples: usize,
    #[serde(default = "default_beta")]
    pub beta: u8,
    /// `goe`, `gue`, `uniform`, `circulant:<b>` or `two_block:<within>:<between>`;
    /// defaults to GOE/GUE by `beta`.
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub law: Option<String>,
    #[serde(default)]
    pub energies: Vec<EnergySpec>,
    #[serde(default)]
    pub indices: Vec<IndexSpec>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Wegner interval half-widths in units of `ℓ(E)`.
    #[serde(default)]
    pub deltas: Vec<f64>,
    /// Local-law heights `η = 2^j / n`.
    #[serde(default)]
    pub eta_steps: Vec<u32>,
    /// Characteristic-function grid.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
    /// Second entry law for paired variance comparisons.
    #[serde(default)]
    pub compare_law: Option<String>,
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub se_target: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub criteria: BTreeMap<String, Band>,
}

impl ExperimentConfig {
    /// Bare configuration with defaults everywhere else.
    pub fn new(experiment: ExperimentKind, n: Vec<usize>, samples: usize, seed: u64) -> Self {
        ExperimentConfig {
            experiment,
            n,
            samples,
            beta: 1,
            profile: None,
            law: None,
            energies: Vec::new(),
            indices: Vec::new(),
            t: None,
            gamma: None,
            deltas: Vec::new(),
            eta_steps: Vec::new(),
            lambdas: Vec::new(),
            test_functions: Vec::new(),
            compare_law: None,
            regime: None,
            se_target: None,
            seed: Some(seed),
            out_dir: None,
            criteria: BTreeMap::new(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("bad experiment config: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn profile_label(&self) -> String {
        match &self.profile {
            Some(p) => p.trim().to_ascii_lowercase(),
            None if self.beta == 2 => "gue".into(),
            None => "goe".into(),
        }
    }

    pub fn entry_law(&self) -> Result<EntryLaw> {
        EntryLaw::parse(self.law.as_deref().unwrap_or("gaussian")).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn energies_or_default(&self) -> Vec<EnergySpec> {
        if self.energies.is_empty() {
            vec![EnergySpec::Value(0.0)]
        } else {
            self.energies.clone()
        }
    }

    pub fn indices_or_default(&self) -> Vec<IndexSpec> {
        if self.indices.is_empty() {
            vec![IndexSpec::Fraction { fraction: 0.5 }]
        } else {
            self.indices.clone()
        }
    }

    pub fn deltas_or_default(&self) -> Vec<f64> {
        if self.deltas.is_empty() {
            vec![0.2, 0.1, 0.05]
        } else {
            self.deltas.clone()
        }
    }

    pub fn eta_steps_or_default(&self) -> Vec<u32> {
        if self.eta_steps.is_empty() {
            vec![0, 2, 4, 6]
        } else {
            self.eta_steps.clone()
        }
    }

    pub fn lambdas_or_default(&self) -> Vec<f64> {
        if self.lambdas.is_empty() {
            (0..=8).map(|i| 0.25 * i as f64).collect()
        } else {
            self.lambdas.clone()
        }
    }

    pub fn test_functions_or_default(&self) -> Vec<TestFunctionSpec> {
        if self.test_functions.is_empty() {
            vec![TestFunctionSpec::Polynomial { coeffs: vec![0.0, 1.0] }]
        } else {
            self.test_functions.clone()
        }
    }

    pub fn t_or_default(&self) -> f64 {
        self.t.unwrap_or(match self.experiment {
            ExperimentKind::Advection => 0.1,
            _ => 0.5,
        })
    }

    pub fn index_labels(&self) -> Vec<String> {
        self.indices_or_default().iter().map(|i| i.label()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seed.is_none() {
            return bad("seed is mandatory".into());
        }
        if self.samples < 1 {
            return bad("samples (M) must be at least 1".into());
        }
        if self.n.is_empty() {
            return bad("n must name at least one dimension".into());
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 8) {
            return bad(format!("n = {n} is below the minimum 8"));
        }
        if self.beta != 1 && self.beta != 2 {
            return bad(format!("beta must be 1 or 2, got {}", self.beta));
        }
        self.entry_law()?;
        if let Some(l) = &self.compare_law {
            EntryLaw::parse(l).map_err(|e| Error::Config(e.to_string()))?;
        }
        let label = self.profile_label();
        if !label.starts_with("two_block:") {
            match ProfileKind::parse(&label) {
                Ok(ProfileKind::Custom) => return bad("custom profiles cannot be named in a config".into()),
                Ok(_) => {}
                Err(e) => return bad(e.to_string()),
            }
        }
        let max_e = if self.experiment == ExperimentKind::Wegner {
            3.0
        } else {
            2.0
        };
        for &n in &self.n {
            for e in self.energies_or_default() {
                let v = e.at(n);
                if !(v.abs() <= max_e) {
                    return bad(format!("energy {v} at n = {n} outside [-{max_e}, {max_e}]"));
                }
            }
            if self.experiment == ExperimentKind::EigenvalueClt {
                for k in self.indices_or_default() {
                    let k = k.at(n);
                    if k == 0 || k >= n {
                        return bad(format!("index {k} outside 1..{n} at n = {n}"));
                    }
                }
            }
        }
        if self.deltas_or_default().iter().any(|d| !(*d > 0.0)) {
            return bad("Wegner half-widths must be positive".into());
        }
        if self.lambdas_or_default().iter().any(|l| !l.is_finite()) {
            return bad("lambda grid must be finite".into());
        }
        if self.experiment.uses_dbm() || self.t.is_some() {
            let t = self.t_or_default();
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("t = {t} must lie in (0, 1]"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("gamma = {g} must lie in (0, 1)"));
            }
        }
        for f in &self.test_functions {
            match f {
                TestFunctionSpec::Polynomial { coeffs }
                    if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) =>
                {
                    return bad("polynomial coefficients must be finite and non-empty".into())
                }
                TestFunctionSpec::Mesoscopic { e, scale_exponent }
                    if !(e.abs() <= 2.0) || !(*scale_exponent > 0.0 && *scale_exponent < 1.0) =>
                {
                    return bad("mesoscopic test function needs |e| ≤ 2 and 0 < scale_exponent < 1".into())
                }
                TestFunctionSpec::LogRe { e, gamma } | TestFunctionSpec::LogIm { e, gamma }
                    if !(e.abs() <= 2.0) || !(*gamma > 0.0 && *gamma < 1.0) =>
                {
                    return bad("log test function needs |e| ≤ 2 and 0 < gamma < 1".into())
                }
                _ => {}
            }
        }
        for (k, b) in &self.criteria {
            if let (Some(lo), Some(hi)) = (b.lo, b.hi) {
                if !(lo <= hi) {
                    return bad(format!("criterion '{k}' has lo > hi"));
                }
            }
        }
        if let Some(r) = self.regime {
            if !(r.epsilon > 0.0 && r.c > 0.0) {
                return bad("regime epsilon and c must be positive".into());
            }
        }
        Ok(())
    }
}
