//! Variance profiles, entry laws and matrix sampling.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::tridiag::Tridiagonal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProfileKind {
    Goe,
    Gue,
    Uniform,
    Circulant { bandwidth: usize },
    Custom,
}

impl ProfileKind {
    /// Parse `goe`, `gue`, `uniform`, `circulant:<b>` or `custom`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "goe" => ProfileKind::Goe,
            "gue" => ProfileKind::Gue,
            "uniform" => ProfileKind::Uniform,
            "custom" => ProfileKind::Custom,
            _ => {
                if let Some(b) = s.strip_prefix("circulant:") {
                    let bandwidth = b
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad circulant bandwidth '{b}'")))?;
                    ProfileKind::Circulant { bandwidth }
                } else {
                    return Err(Error::invalid(format!("unknown profile kind '{s}'")));
                }
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            ProfileKind::Goe => "goe".into(),
            ProfileKind::Gue => "gue".into(),
            ProfileKind::Uniform => "uniform".into(),
            ProfileKind::Circulant { bandwidth } => format!("circulant:{bandwidth}"),
            ProfileKind::Custom => "custom".into(),
        }
    }
}

/// Entry variances `σ²_ij` of a Wigner-type matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub n: usize,
    pub kind: ProfileKind,
    pub sigma2: Vec<f64>,
    /// `n · min σ²_ij`.
    pub c_lower: f64,
    /// `n · max σ²_ij`.
    pub c_upper: f64,
    /// Every row sums to one within 1e-12.
    pub exact_gw: bool,
}

impl VarianceProfile {
    fn finish(n: usize, kind: ProfileKind, sigma2: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("profile dimension must be positive"));
        }
        if sigma2.len() != n * n {
            return Err(Error::invalid(format!(
                "variance grid has {} entries, expected {}",
                sigma2.len(),
                n * n
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = sigma2[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("sigma2[{i}][{j}] = {v} is not a variance")));
                }
                if v != sigma2[j * n + i] {
                    return Err(Error::invalid(format!("sigma2 not symmetric at ({i}, {j})")));
                }
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &v in &sigma2 {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi == 0.0 {
            return Err(Error::invalid("variance profile is identically zero"));
        }
        let exact_gw = (0..n).all(|i| (sigma2[i * n..(i + 1) * n].iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        Ok(VarianceProfile {
            n,
            kind,
            sigma2,
            c_lower: lo * n as f64,
            c_upper: hi * n as f64,
            exact_gw,
        })
    }

    /// Validated user-supplied grid.
    pub fn custom(n: usize, sigma2: Vec<f64>) -> Result<Self> {
        Self::finish(n, ProfileKind::Custom, sigma2)
    }

    /// Two equal blocks (the first `⌈n/2⌉` indices, then the rest) with
    /// variance `within/n` inside a block and `between/n` across.
    pub fn two_block(n: usize, within: f64, between: f64) -> Result<Self> {
        let h = n.div_ceil(2);
        let g = Self::block_grid(n, h, within, between);
        Self::custom(n, g)
    }

    fn block_grid(n: usize, h: usize, within: f64, between: f64) -> Vec<f64> {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let same = (i < h) == (j < h);
                g[i * n + j] = if same { within } else { between } / n as f64;
            }
        }
        g
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma2[i * self.n + j]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.sigma2[i * self.n..(i + 1) * self.n].iter().sum()
    }

    /// `Σ_i σ²_ii`.
    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// The profile at another dimension, for kinds defined at every n.
    pub fn resized(&self, n: usize) -> Result<Self> {
        match self.kind {
            ProfileKind::Custom => Err(Error::invalid("custom profiles have a fixed dimension")),
            kind => make_profile(kind, n),
        }
    }
}

/// Deterministic profile constructor.
pub fn make_profile(kind: ProfileKind, n: usize) -> Result<VarianceProfile> {
    if n == 0 {
        return Err(Error::invalid("profile dimension must be positive"));
    }
    let nf = n as f64;
    let sigma2 = match kind {
        ProfileKind::Goe => {
            let mut g = vec![1.0 / nf; n * n];
            for i in 0..n {
                g[i * n + i] = 2.0 / nf;
            }
            g
        }
        ProfileKind::Gue | ProfileKind::Uniform => vec![1.0 / nf; n * n],
        ProfileKind::Circulant { bandwidth } => {
            if bandwidth >= n {
                return Err(Error::invalid(format!(
                    "circulant bandwidth {bandwidth} must be below n = {n}"
                )));
            }
            let b = bandwidth as i64;
            let norm = ((b + 1) * (b + 1)) as f64;
            let mut w = vec![0.0; n];
            for d in -b..=b {
                w[d.rem_euclid(n as i64) as usize] += (b + 1 - d.abs()) as f64 / norm;
            }
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    g[i * n + j] = w[(j + n - i) % n];
                }
            }
            g
        }
        ProfileKind::Custom => {
            return Err(Error::invalid("custom profiles need an explicit grid"));
        }
    };
    VarianceProfile::finish(n, kind, sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    Gaussian,
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    UniformSymmetric,
}

impl EntryLaw {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" | "normal" => Ok(EntryLaw::Gaussian),
            "rademacher" => Ok(EntryLaw::Rademacher),
            "uniform" | "uniform_symmetric" => Ok(EntryLaw::UniformSymmetric),
            other => Err(Error::invalid(format!("unknown entry law '{other}'"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EntryLaw::Gaussian => "gaussian",
            EntryLaw::Rademacher => "rademacher",
            EntryLaw::UniformSymmetric => "uniform_symmetric",
        }
    }

    /// One unit-variance draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EntryLaw::Gaussian => rng.sample(StandardNormal),
            EntryLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryLaw::UniformSymmetric => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

/// Normalised cumulants `(s⁽¹⁾, s⁽²⁾, s⁽³⁾, s⁽⁴⁾)` of the unit-variance law.
pub fn entry_cumulants(law: EntryLaw) -> [f64; 4] {
    match law {
        EntryLaw::Gaussian => [0.0, 1.0, 0.0, 0.0],
        EntryLaw::Rademacher => [0.0, 1.0, 0.0, -2.0],
        EntryLaw::UniformSymmetric => [0.0, 1.0, 0.0, -1.2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    Real,
    ComplexHermitian,
}

impl SymmetryClass {
    pub fn beta(&self) -> u8 {
        match self {
            SymmetryClass::Real => 1,
            SymmetryClass::ComplexHermitian => 2,
        }
    }

    pub fn from_beta(beta: u8) -> Result<Self> {
        match beta {
            1 => Ok(SymmetryClass::Real),
            2 => Ok(SymmetryClass::ComplexHermitian),
            b => Err(Error::invalid(format!("beta must be 1 or 2, got {b}"))),
        }
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub profile: String,
    pub law: String,
    /// Operations applied after sampling, e.g. `ou(t=0.5,seed=3)`.
    #[serde(default)]
    pub history: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class", content = "data")]
pub enum Entries {
    Real(Vec<f64>),
    ComplexHermitian(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSample {
    pub n: usize,
    pub entries: Entries,
    pub seed: SeedRecord,
}

impl MatrixSample {
    pub fn class(&self) -> SymmetryClass {
        match self.entries {
            Entries::Real(_) => SymmetryClass::Real,
            Entries::ComplexHermitian(_) => SymmetryClass::ComplexHermitian,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        match &self.entries {
            Entries::Real(v) => Complex64::new(v[i * self.n + j], 0.0),
            Entries::ComplexHermitian(v) => v[i * self.n + j],
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.entry(i, i).re).sum()
    }

    /// Dense complex copy, row-major.
    pub fn to_complex(&self) -> Vec<Complex64> {
        match &self.entries {
            Entries::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            Entries::ComplexHermitian(v) => v.clone(),
        }
    }

    /// Check shape, exact symmetry / hermiticity and a real diagonal.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let len = match &self.entries {
            Entries::Real(v) => v.len(),
            Entries::ComplexHermitian(v) => v.len(),
        };
        if n == 0 || len != n * n {
            return Err(Error::invalid(format!("sample of dimension {n} holds {len} entries")));
        }
        for i in 0..n {
            for j in i..n {
                let a = self.entry(i, j);
                let b = self.entry(j, i);
                if !a.re.is_finite() || !a.im.is_finite() {
                    return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
                }
                if a != b.conj() {
                    return Err(Error::invalid(format!(
                        "entries ({i}, {j}) and ({j}, {i}) are not conjugate"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MatrixSample = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// Sample a Wigner-type matrix. Row `i` of the upper triangle is drawn from
/// its own stream `derive(seed, "matrix", [i])`, so rows can be generated in
/// any order.
pub fn sample_matrix(profile: &VarianceProfile, law: EntryLaw, class: SymmetryClass, seed: u64) -> MatrixSample {
    let n = profile.n;
    let record = SeedRecord {
        seed,
        profile: profile.kind.label(),
        law: law.label().into(),
        history: Vec::new(),
    };
    let entries = match class {
        SymmetryClass::Real => {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                let mut r = rng::stream(seed, "matrix", &[i as u64]);
                for j in i..n {
                    let x = profile.get(i, j).sqrt() * law.draw(&mut r);
                    h[i * n + j] = x;
                    h[j * n + i] = x;
                }
            }
            Entries::Real(h)
        }
        SymmetryClass::ComplexHermitian => {
            let mut h = vec![Complex64::new(0.0, 0.0); n * n];
            let half = std::f64::consts::FRAC_1_SQRT_2;
            for i in 0..n {
                let mut r = rng::stream(seed, "matrix", &[i as u64]);
                h[i * n + i] = Complex64::new(profile.get(i, i).sqrt() * law.draw(&mut r), 0.0);
                for j in i + 1..n {
                    let s = profile.get(i, j).sqrt() * half;
                    let x = Complex64::new(s * law.draw(&mut r), s * law.draw(&mut r));
                    h[i * n + j] = x;
                    h[j * n + i] = x.conj();
                }
            }
            Entries::ComplexHermitian(h)
        }
    };
    MatrixSample {
        n,
        entries,
        seed: record,
    }
}

/// Exact-in-law tridiagonal representative of GOE (β=1) or GUE (β=2).
pub fn sample_tridiagonal(n: usize, beta: u8, seed: u64) -> Result<Tridiagonal> {
    Tridiagonal::gaussian(n, beta, &mut rng::stream(seed, "tridiagonal", &[]))
}

/// Ornstein–Uhlenbeck matrix flow `e^{-t/2} H₀ + √(1-e^{-t}) U` with `U` a
/// fresh GOE/GUE matrix of the same symmetry class.
pub fn ou_interpolate(h0: &MatrixSample, t: f64, seed: u64) -> Result<MatrixSample> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!(
            "OU time must be a finite nonnegative number, got {t}"
        )));
    }
    h0.validate()?;
    let mut out = h0.clone();
    out.seed.history.push(format!("ou(t={t},seed={seed})"));
    if t == 0.0 {
        return Ok(out);
    }
    let a = (-0.5 * t).exp();
    let b = (-(-t).exp_m1()).sqrt();
    let class = h0.class();
    let kind = match class {
        SymmetryClass::Real => ProfileKind::Goe,
        SymmetryClass::ComplexHermitian => ProfileKind::Gue,
    };
    let u = sample_matrix(&make_profile(kind, h0.n)?, EntryLaw::Gaussian, class, seed);
    out.entries = match (&h0.entries, &u.entries) {
        (Entries::Real(h), Entries::Real(g)) => Entries::Real(h.iter().zip(g).map(|(h, g)| a * h + b * g).collect()),
        (Entries::ComplexHermitian(h), Entries::ComplexHermitian(g)) => {
            Entries::ComplexHermitian(h.iter().zip(g).map(|(h, g)| a * h + b * g).collect())
        }
        _ => unreachable!(),
    };
    Ok(out)
}
