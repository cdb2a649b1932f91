//! Analytic predictions for linear statistics `Σ f(λ_i)`: variance and
//! expectation terms, the deterministic shifts `δ_i`, the finite-n
//! covariance exponents of the log-correlated field and the Gaussian
//! characteristic function.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{entry_cumulants, EntryLaw, VarianceProfile};
use crate::quad::{self, Rule};
use crate::{linalg, spectral, Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Smoothness {
    Polynomial { degree: usize },
    Smooth,
    Mesoscopic { e: f64, scale: f64 },
    LogRe { e: f64, eta: f64 },
    LogIm { e: f64, eta: f64 },
}

impl Smoothness {
    pub fn is_log(&self) -> bool {
        matches!(self, Smoothness::LogRe { .. } | Smoothness::LogIm { .. })
    }
}

/// A test function with its first two derivatives.
#[derive(Clone)]
pub struct TestFunction {
    f: RealFn,
    df: RealFn,
    d2f: RealFn,
    /// Interval outside which the function is treated as zero.
    pub support: (f64, f64),
    /// `‖f‖₁, ‖f'‖₁, ‖f''‖₁` over the support.
    pub norms: [f64; 3],
    pub kind: Smoothness,
    /// Points needing resolution, with their length scale (0 for a plain
    /// breakpoint).
    pub features: Vec<(f64, f64)>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("support", &self.support)
            .field("norms", &self.norms)
            .field("kind", &self.kind)
            .field("features", &self.features)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        f: RealFn,
        df: RealFn,
        d2f: RealFn,
        support: (f64, f64),
        kind: Smoothness,
        features: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let (a, b) = support;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("bad support [{a}, {b}]")));
        }
        if features
            .iter()
            .any(|&(c, w)| !c.is_finite() || !w.is_finite() || w < 0.0)
        {
            return Err(Error::invalid("feature points must be finite with nonnegative width"));
        }
        let mut out = TestFunction {
            f,
            df,
            d2f,
            support,
            norms: [0.0; 3],
            kind,
            features,
        };
        out.check_derivatives()?;
        out.norms = out.l1_norms()?;
        if out.norms.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("test function", "L¹ norms are not finite"));
        }
        Ok(out)
    }

    /// `Σ c_k x^k` on the window `[-4, 4]`.
    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("polynomial needs finite coefficients"));
        }
        let c0 = coeffs.to_vec();
        let c1: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        let c2: Vec<f64> = c1.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        let horner = |c: Vec<f64>| -> RealFn { Arc::new(move |x| c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)) };
        let degree = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        Self::new(
            horner(c0),
            horner(c1),
            horner(c2),
            (-4.0, 4.0),
            Smoothness::Polynomial { degree },
            Vec::new(),
        )
    }

    /// Gaussian bump `exp(-(x-e)²/(2s²))`.
    pub fn mesoscopic(e: f64, scale: f64) -> Result<Self> {
        if !(e.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(
                "mesoscopic bump needs a finite centre and positive scale",
            ));
        }
        let g = move |x: f64| (-0.5 * ((x - e) / scale).powi(2)).exp();
        Self::new(
            Arc::new(g),
            Arc::new(move |x| -(x - e) / (scale * scale) * g(x)),
            Arc::new(move |x| {
                let u = (x - e) / scale;
                (u * u - 1.0) / (scale * scale) * g(x)
            }),
            (e - 12.0 * scale, e + 12.0 * scale),
            Smoothness::Mesoscopic { e, scale },
            vec![(e, scale)],
        )
    }

    /// `f·χ` with the cutoff [`cutoff`]; the support becomes `[-4, 4]`.
    pub fn with_cutoff(&self) -> Result<Self> {
        let (f, df, d2f) = (self.f.clone(), self.df.clone(), self.d2f.clone());
        let (f1, df1) = (f.clone(), df.clone());
        let f2 = f.clone();
        let mut features = self.features.clone();
        features.extend([(-4.0, 0.0), (-3.0, 0.0), (3.0, 0.0), (4.0, 0.0)]);
        let kind = match self.kind {
            Smoothness::Polynomial { .. } => Smoothness::Smooth,
            k => k,
        };
        Self::new(
            Arc::new(move |x| f(x) * cutoff(x)),
            Arc::new(move |x| df(x) * cutoff(x) + f1(x) * cutoff_d1(x)),
            Arc::new(move |x| d2f(x) * cutoff(x) + 2.0 * df1(x) * cutoff_d1(x) + f2(x) * cutoff_d2(x)),
            (-4.0, 4.0),
            kind,
            features,
        )
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn df(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    pub fn d2f(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }

    fn min_width(&self) -> f64 {
        self.features
            .iter()
            .filter(|f| f.1 > 0.0)
            .fold(1.0f64, |m, f| m.min(f.1))
    }

    fn check_derivatives(&self) -> Result<()> {
        let (a, b) = self.support;
        let w = self.min_width();
        let h = 1e-4 * w;
        let mut probes: Vec<f64> = (0..101).map(|k| a + (b - a) * (k as f64 + 0.5) / 101.0).collect();
        for &(c, wc) in &self.features {
            if wc > 0.0 {
                for s in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
                    probes.push(c + s * wc);
                }
            }
        }
        let kinks: Vec<f64> = self.features.iter().filter(|f| f.1 == 0.0).map(|f| f.0).collect();
        for x in probes {
            if x - h <= a || x + h >= b || kinks.iter().any(|&k| (x - k).abs() < 4.0 * h) {
                continue;
            }
            let d1 = (self.f(x + h) - self.f(x - h)) / (2.0 * h);
            let d2 = (self.df(x + h) - self.df(x - h)) / (2.0 * h);
            let (e1, e2) = (self.df(x), self.d2f(x));
            if !e1.is_finite() || !e2.is_finite() || !self.f(x).is_finite() {
                return Err(Error::domain("test function", format!("not finite at x = {x}")));
            }
            if (d1 - e1).abs() > 1e-5 * (1.0 + e1.abs()) {
                return Err(Error::domain(
                    "test function",
                    format!("f' = {e1} but central difference gives {d1} at x = {x}"),
                ));
            }
            if (d2 - e2).abs() > 1e-5 * (1.0 + e2.abs()) {
                return Err(Error::domain(
                    "test function",
                    format!("f'' = {e2} but central difference gives {d2} at x = {x}"),
                ));
            }
        }
        Ok(())
    }

    fn l1_norms(&self) -> Result<[f64; 3]> {
        let (a, b) = self.support;
        let br = breakpoints(&self.features, a, b, 0.5);
        let mut out = [0.0; 3];
        for (k, g) in [&self.f, &self.df, &self.d2f].into_iter().enumerate() {
            for p in br.windows(2) {
                out[k] += quad::adaptive(|x| g(x).abs(), p[0], p[1], 1e-10 * (p[1] - p[0]))?;
            }
        }
        Ok(out)
    }
}

/// Smooth cutoff: 1 on `[-3, 3]`, 0 outside `[-4, 4]`, quintic (C²)
/// bridge in between.
pub fn cutoff(x: f64) -> f64 {
    let t = x.abs() - 3.0;
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

pub fn cutoff_d1(x: f64) -> f64 {
    let t = x.abs() - 3.0;
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let s = -30.0 * t * t * (1.0 - t) * (1.0 - t);
    if x < 0.0 {
        -s
    } else {
        s
    }
}

pub fn cutoff_d2(x: f64) -> f64 {
    let t = x.abs() - 3.0;
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogPart {
    Re,
    Im,
}

/// `log((x-E) + i n^{-γ})·χ(x)`, real or imaginary part.
pub fn log_test_function(e: f64, gamma: f64, n: usize, part: LogPart) -> Result<TestFunction> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if n < 2 || !e.is_finite() || e.abs() > 3.0 {
        return Err(Error::invalid("log test function needs n ≥ 2 and |E| ≤ 3"));
    }
    let eta = (n as f64).powf(-gamma);
    let (g, g1, g2): (RealFn, RealFn, RealFn) = match part {
        LogPart::Re => (
            Arc::new(move |x| 0.5 * ((x - e).powi(2) + eta * eta).ln()),
            Arc::new(move |x| (x - e) / ((x - e).powi(2) + eta * eta)),
            Arc::new(move |x| {
                let u = x - e;
                let d = u * u + eta * eta;
                (eta * eta - u * u) / (d * d)
            }),
        ),
        LogPart::Im => (
            Arc::new(move |x| eta.atan2(x - e)),
            Arc::new(move |x| -eta / ((x - e).powi(2) + eta * eta)),
            Arc::new(move |x| {
                let u = x - e;
                let d = u * u + eta * eta;
                2.0 * eta * u / (d * d)
            }),
        ),
    };
    let kind = match part {
        LogPart::Re => Smoothness::LogRe { e, eta },
        LogPart::Im => Smoothness::LogIm { e, eta },
    };
    let raw = TestFunction {
        f: g,
        df: g1,
        d2f: g2,
        support: (-4.0, 4.0),
        norms: [0.0; 3],
        kind,
        features: vec![(e, eta)],
    };
    raw.with_cutoff()
}

/// Sorted breakpoints in `[lo, hi]`: the ends, every feature point,
/// geometric refinement `c ± w·2^k` around features of positive width,
/// and no panel longer than `max_len`.
fn breakpoints(features: &[(f64, f64)], lo: f64, hi: f64, max_len: f64) -> Vec<f64> {
    let mut b = vec![lo, hi];
    for &(c, w) in features {
        if c > lo && c < hi {
            b.push(c);
        }
        if w > 0.0 {
            let mut d = w;
            while d < hi - lo {
                for x in [c - d, c + d] {
                    if x > lo && x < hi {
                        b.push(x);
                    }
                }
                d *= 2.0;
            }
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    let mut out = vec![b[0]];
    for p in b.windows(2) {
        let k = ((p[1] - p[0]) / max_len).ceil().max(1.0) as usize;
        for j in 1..=k {
            out.push(p[0] + (p[1] - p[0]) * j as f64 / k as f64);
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
struct Nodes {
    x: Vec<f64>,
    w: Vec<f64>,
}

fn composite(br: &[f64], p: usize) -> Nodes {
    let rule = Rule::new(p);
    let mut out = Nodes::default();
    for q in br.windows(2) {
        for (x, w) in rule.mapped(q[0], q[1]) {
            out.x.push(x);
            out.w.push(w);
        }
    }
    out
}

/// Nodes for `∫_{-2}^{2} g(x) dx/√(4-x²)` through `x = 2cosθ`, with
/// panels in θ following the features.
fn theta_nodes(features: &[(f64, f64)], p: usize) -> Nodes {
    let xb = breakpoints(features, -2.0, 2.0, 4.0);
    let mut tb: Vec<f64> = xb.iter().map(|&x| (0.5 * x).clamp(-1.0, 1.0).acos()).collect();
    tb.sort_by(f64::total_cmp);
    tb.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let mut panels = vec![tb[0]];
    for q in tb.windows(2) {
        let k = ((q[1] - q[0]) / 0.25).ceil().max(1.0) as usize;
        for j in 1..=k {
            panels.push(q[0] + (q[1] - q[0]) * j as f64 / k as f64);
        }
    }
    let t = composite(&panels, p);
    Nodes {
        x: t.x.iter().map(|th| 2.0 * th.cos()).collect(),
        w: t.w,
    }
}

fn divided(f: &TestFunction, x: f64, y: f64, fx: f64, fy: f64) -> f64 {
    if (x - y).abs() < 1e-8 {
        f.df(0.5 * (x + y))
    } else {
        (fx - fy) / (x - y)
    }
}

fn main_term_at(f: &TestFunction, p: usize, symmetric: bool) -> f64 {
    let t = theta_nodes(&f.features, p);
    let fx: Vec<f64> = t.x.iter().map(|&x| f.f(x)).collect();
    let dfx: Vec<f64> = t.x.iter().map(|&x| f.df(x)).collect();
    let n = t.x.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let d = divided(f, t.x[i], t.x[j], fx[i], fx[j]);
            row += t.w[j]
                * if symmetric {
                    d * d * (4.0 - t.x[i] * t.x[j])
                } else {
                    d * dfx[j] * (4.0 - t.x[j] * t.x[j])
                };
        }
        s += t.w[i] * row;
    }
    if symmetric {
        s / (2.0 * PI * PI)
    } else {
        s / (PI * PI)
    }
}

/// Evaluate with 8, 16, 32, 64 nodes per panel; stop once two successive
/// values agree to 1e-10, fail if the last two differ by more than 1e-6.
fn refined<F: Fn(usize) -> f64>(what: &'static str, g: F) -> Result<f64> {
    let mut prev = g(8);
    let mut p = 8;
    while p < 64 {
        p *= 2;
        let v = g(p);
        let diff = (v - prev).abs();
        let scale = v.abs().max(prev.abs());
        if diff <= 1e-10 * scale || diff <= 1e-13 {
            return Ok(v);
        }
        if p == 64 {
            if diff <= 1e-6 * scale {
                return Ok(v);
            }
            return Err(Error::NonConvergence {
                what,
                iterations: p,
                residual: diff / scale.max(1e-300),
            });
        }
        prev = v;
    }
    Ok(prev)
}

/// `(1/π²)∬ ((f(x)-f(y))/(x-y)) f'(y) √(4-y²)/√(4-x²) dx dy`.
pub fn variance_main(f: &TestFunction) -> Result<f64> {
    refined("variance quadrature", |p| main_term_at(f, p, false))
}

/// `(1/2π²)∬ ((f(x)-f(y))/(x-y))² (4-xy)/(√(4-x²)√(4-y²)) dx dy`.
pub fn variance_main_symmetric(f: &TestFunction) -> Result<f64> {
    refined("variance quadrature", |p| main_term_at(f, p, true))
}

/// `(1/2) Σ_k k c_k²` from the Chebyshev coefficients of `f(2cosθ)`.
pub fn variance_main_chebyshev(f: &TestFunction, terms: usize) -> f64 {
    let c = quad::chebyshev_coefficients(terms, |x| f.f(x));
    0.5 * c
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, ck)| k as f64 * ck * ck)
        .sum::<f64>()
}

/// `∫_{-2}^{2} f(x) g(x) / √(4-x²) dx`.
pub fn arcsine_integral<G: Fn(f64) -> f64>(f: &TestFunction, g: G) -> Result<f64> {
    refined("arcsine quadrature", |p| {
        let t = theta_nodes(&f.features, p);
        t.x.iter().zip(&t.w).map(|(&x, &w)| w * f.f(x) * g(x)).sum()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBreakdown {
    pub beta: u8,
    pub main: f64,
    pub trace_s_term: f64,
    pub quartic_term: f64,
    /// The `Σ A_ii` part of `ε(f)`, computed.
    pub epsilon_diag: f64,
    /// Bound on `|ε(f)|`.
    pub epsilon_band: f64,
    /// `main + trace_s_term + quartic_term ± epsilon_band`.
    pub total_with_band: Interval,
    pub flags: Vec<String>,
}

impl VarianceBreakdown {
    pub fn base(&self) -> f64 {
        self.main + self.trace_s_term + self.quartic_term
    }

    /// Base plus the computed diagonal part of `ε(f)`.
    pub fn estimate(&self) -> f64 {
        self.base() + self.epsilon_diag
    }
}

/// `Σ_{j,a} κ₄(h_ja)`, the summed fourth cumulants of the entries.
pub fn fourth_cumulant_sum(profile: &VarianceProfile, law: EntryLaw, beta: u8) -> f64 {
    let k = entry_cumulants(law)[3];
    let n = profile.n;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = profile.get(i, j);
            s += if beta == 2 && i != j { 0.5 * v * v } else { v * v };
        }
    }
    k * s
}

fn check_beta(beta: u8) -> Result<()> {
    if beta == 1 || beta == 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("beta must be 1 or 2, got {beta}")))
    }
}

/// Eigenvalues of S other than the Perron value `1 + O(1/n)` of a
/// generalized Wigner profile.
fn subleading_eigenvalues(profile: &VarianceProfile) -> Result<Vec<f64>> {
    let mut ev = linalg::symmetric_eigenvalues(profile.n, &profile.sigma2)
        .map_err(|e| Error::domain("variance_gw", format!("eigenvalues of S: {e}")))?;
    ev.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    if (ev[0] - 1.0).abs() > 2.0 / profile.n as f64 + 1e-9 {
        return Err(Error::domain(
            "variance_gw",
            format!("top eigenvalue of S is {}", ev[0]),
        ));
    }
    ev.remove(0);
    if let Some(l) = ev.iter().find(|l| l.abs() >= 1.0 - 1e-9) {
        return Err(Error::domain(
            "variance_gw",
            format!("S has a second eigenvalue {l} of modulus one"),
        ));
    }
    Ok(ev)
}

/// Nodes for `∫_{-4}^{4} g(x) dx/√|4-x²|`.
fn inv_sqrt_nodes(features: &[(f64, f64)], p: usize) -> Nodes {
    let mut out = theta_nodes(features, p);
    let u = composite(&breakpoints(&[], 0.0, 2f64.sqrt(), 0.2), p);
    for (&ui, &wi) in u.x.iter().zip(&u.w) {
        let w = 2.0 * wi / (4.0 + ui * ui).sqrt();
        for x in [2.0 + ui * ui, -2.0 - ui * ui] {
            out.x.push(x);
            out.w.push(w);
        }
    }
    out
}

/// `(1/π²)∬_{[-4,4]²} |f(x)-f(y)| |f'(y)| / √|4-x²| dx dy`.
fn remainder_integral(f: &TestFunction) -> f64 {
    let xs = inv_sqrt_nodes(&f.features, 16);
    let ys = composite(&breakpoints(&f.features, -4.0, 4.0, 0.25), 16);
    let fy: Vec<f64> = ys.x.iter().map(|&y| f.f(y)).collect();
    let dfy: Vec<f64> = ys.x.iter().map(|&y| f.df(y).abs()).collect();
    let mut s = 0.0;
    for (&x, &wx) in xs.x.iter().zip(&xs.w) {
        let fx = f.f(x);
        let row: f64 = (0..ys.x.len()).map(|j| ys.w[j] * (fx - fy[j]).abs() * dfy[j]).sum();
        s += wx * row;
    }
    s / (PI * PI)
}

/// Variance of `Σ f(λ_i)` for a generalized Wigner matrix, term by term.
///
/// `trace_s_term = -(Tr S/4π²)(∫ f x/√(4-x²))²` and
/// `quartic_term = (Σκ₄/2π²)(∫ f (2-x²)/√(4-x²))²`; `ε(f)` is split into
/// its computed diagonal part `(2/β)(Tr S - 1)(∫ f x/√(4-x²))²/4π²` and the
/// remainder bound `(2/β)·Σ_{k≥2} λ_k²/(1-|λ_k|)·(1/π²)∬|f(x)-f(y)||f'(y)|/√|4-x²|`
/// over the subleading eigenvalues of `S`.
pub fn variance_gw(f: &TestFunction, profile: &VarianceProfile, law: EntryLaw, beta: u8) -> Result<VarianceBreakdown> {
    check_beta(beta)?;
    let tol = 2.0 / profile.n as f64 + 1e-12;
    if (0..profile.n).any(|i| (profile.row_sum(i) - 1.0).abs() > tol) {
        return Err(Error::invalid("variance_gw needs row sums 1 + O(1/n)"));
    }
    let b = f64::from(beta);
    let main = variance_main(f)? / b;
    let i1 = arcsine_integral(f, |x| x)?;
    let i2 = arcsine_integral(f, |x| 2.0 - x * x)?;
    let trs = profile.trace();
    let trace_s_term = if beta == 1 {
        -trs / (4.0 * PI * PI) * i1 * i1
    } else {
        0.0
    };
    let quartic_term = fourth_cumulant_sum(profile, law, beta) / (2.0 * PI * PI) * i2 * i2;
    let ev = subleading_eigenvalues(profile)?;
    let tail: f64 = ev.iter().sum();
    let r: f64 = ev.iter().map(|l| l * l / (1.0 - l.abs())).sum();
    let epsilon_diag = (2.0 / b) * tail * i1 * i1 / (4.0 * PI * PI);
    let epsilon_band = epsilon_diag.abs() + (2.0 / b) * r * remainder_integral(f);
    let base = main + trace_s_term + quartic_term;
    let mut flags = Vec::new();
    if beta == 2 {
        flags.push("beta2_halving".to_string());
    }
    if f.kind.is_log() {
        flags.push("log_type".to_string());
    }
    Ok(VarianceBreakdown {
        beta,
        main,
        trace_s_term,
        quartic_term,
        epsilon_diag,
        epsilon_band,
        total_with_band: Interval {
            lo: base - epsilon_band,
            hi: base + epsilon_band,
        },
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationTerms {
    pub delta_gw_leading: f64,
    pub boundary_term: f64,
    pub s_ii_term: f64,
    pub quartic_term: f64,
    pub total: f64,
    /// The split is only determined up to O(1).
    pub o1_ambiguity: bool,
}

/// Leading terms of `E Σ f(λ_i) - n∫f dρ` for a real generalized Wigner
/// matrix, with `s_ii = σ²_ii`.
pub fn expectation_terms(f: &TestFunction, profile: &VarianceProfile, law: EntryLaw) -> Result<ExpectationTerms> {
    let i0 = arcsine_integral(f, |_| 1.0)?;
    let i2 = arcsine_integral(f, |x| 2.0 - x * x)?;
    let i4 = arcsine_integral(f, |x| x.powi(4) - 4.0 * x * x + 2.0)?;
    let delta_gw_leading = -i0 / (2.0 * PI);
    let boundary_term = 0.25 * (f.f(2.0) + f.f(-2.0));
    let s_ii_term = profile.trace() * i2 / (2.0 * PI);
    let quartic_term = fourth_cumulant_sum(profile, law, 1) * i4 / (2.0 * PI);
    Ok(ExpectationTerms {
        delta_gw_leading,
        boundary_term,
        s_ii_term,
        quartic_term,
        total: delta_gw_leading + boundary_term + s_ii_term + quartic_term,
        o1_ambiguity: true,
    })
}

/// `(1/4)(2/β - 1) log(κ(E) ∨ n^{-2/3})`.
pub fn delta_shift(e: f64, n: usize, beta: u8) -> Result<f64> {
    check_beta(beta)?;
    if n < 2 || !e.is_finite() {
        return Err(Error::invalid("delta_shift needs n ≥ 2 and finite E"));
    }
    let k = spectral::kappa(e).max((n as f64).powf(-2.0 / 3.0));
    Ok(0.25 * (2.0 / f64::from(beta) - 1.0) * k.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceExponents {
    pub energies: Vec<f64>,
    pub n: usize,
    pub beta: u8,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub indices: Option<Vec<usize>>,
    pub c: Option<Vec<Vec<f64>>>,
}

fn exponent_grids(e: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let ln = (n as f64).ln();
    let sp: Vec<_> = e.iter().map(|&x| spectral::scale_params(x, n)).collect();
    let raw = |i: usize, j: usize| {
        let d = (e[i] - e[j]).abs().max(sp[i].ell);
        let a = d.ln() / -ln;
        let ratio = if sp[i].kappa > 0.0 {
            (d / sp[i].kappa).min(1.0)
        } else {
            1.0
        };
        (a, ratio.ln() / -ln)
    };
    let m = e.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let (aij, bij) = raw(i, j);
            let (aji, bji) = raw(j, i);
            a[i][j] = 0.5 * (aij + aji);
            b[i][j] = 0.5 * (bij + bji);
        }
    }
    (a, b)
}

/// Finite-n proxies for the covariance exponents, symmetrised as
/// `(x_ij + x_ji)/2`. `c` uses the quantiles of `indices` (1-based).
pub fn covariance_exponents(
    energies: &[f64],
    n: usize,
    beta: u8,
    indices: Option<&[usize]>,
) -> Result<CovarianceExponents> {
    check_beta(beta)?;
    if n < 2 {
        return Err(Error::invalid("covariance exponents need n ≥ 2"));
    }
    if let Some(e) = energies.iter().find(|e| !(e.abs() <= 2.0)) {
        return Err(Error::invalid(format!("energy {e} outside [-2, 2]")));
    }
    let (a, b) = exponent_grids(energies, n);
    let c = match indices {
        Some(ks) => {
            let g: Vec<f64> = ks.iter().map(|&k| spectral::quantile(k, n)).collect::<Result<_>>()?;
            Some(exponent_grids(&g, n).1)
        }
        None => None,
    };
    Ok(CovarianceExponents {
        energies: energies.to_vec(),
        n,
        beta,
        a,
        b,
        indices: indices.map(|k| k.to_vec()),
        c,
    })
}

/// `exp(-λ²V/2)` on a grid of λ.
pub fn char_curve(v: f64, lambdas: &[f64]) -> Result<Vec<f64>> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("variance {v} must be finite and nonnegative")));
    }
    Ok(lambdas.iter().map(|l| (-0.5 * l * l * v).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub quantity: String,
    pub inputs: String,
    pub value: f64,
    pub band: f64,
}

pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Contours `Im z = ±η` for the Wigner-type variance, with heights
/// `eta, eta/2, …` extrapolated to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourMesh {
    pub eta: f64,
    pub levels: usize,
    pub nodes_per_panel: usize,
    /// The lowest contour must reach `n^{-1+a}`.
    pub a: f64,
}

impl Default for ContourMesh {
    fn default() -> Self {
        ContourMesh {
            eta: 0.1,
            levels: 3,
            nodes_per_panel: 8,
            a: 0.8,
        }
    }
}

/// Profile in a form where `log|det(1 - S M(z)M(w))|` is cheap.
#[derive(Debug, Clone)]
enum Reduced {
    /// Unit row sums: `m = m_sc` and the determinant factors over the
    /// eigenvalues `(λ, multiplicity)` of S.
    Gw {
        modes: Vec<(f64, f64)>,
        trace: f64,
        kappa: f64,
    },
    /// Off-diagonal entries constant on class blocks. `t[c][d] = ŝ_cd n_d`,
    /// `diag[c] = Σ_{j∈c} σ²_jj`, `delta[c] = Σ_{j∈c} (σ²_jj - ŝ_cc)`,
    /// `quart[c][d] = Σ_{j∈c, a∈d} κ₄(h_ja)`.
    Block {
        k: usize,
        t: Vec<f64>,
        diag: Vec<f64>,
        delta: Vec<f64>,
        quart: Vec<f64>,
    },
}

const MAX_CLASSES: usize = 16;

fn reduce(s: &VarianceProfile, law: EntryLaw) -> Result<Reduced> {
    let kappa = fourth_cumulant_sum(s, law, 1);
    if s.exact_gw {
        let mut ev = linalg::symmetric_eigenvalues(s.n, &s.sigma2)
            .map_err(|e| Error::domain("variance_wigner_type", format!("eigenvalues of S: {e}")))?;
        ev.sort_by(f64::total_cmp);
        let mut modes: Vec<(f64, f64)> = Vec::new();
        for l in ev {
            if l.abs() < 1e-13 {
                continue;
            }
            match modes.last_mut() {
                Some((v, m)) if (l - *v).abs() < 1e-10 => *m += 1.0,
                _ => modes.push((l, 1.0)),
            }
        }
        return Ok(Reduced::Gw {
            modes,
            trace: s.trace(),
            kappa,
        });
    }
    let n = s.n;
    let mut reps: Vec<usize> = Vec::new();
    let mut class = vec![0usize; n];
    for i in 0..n {
        let found = reps
            .iter()
            .position(|&r| (0..n).all(|j| j == i || j == r || s.get(i, j) == s.get(r, j)));
        class[i] = match found {
            Some(c) => c,
            None => {
                reps.push(i);
                if reps.len() > MAX_CLASSES {
                    return Err(Error::invalid(format!(
                        "profile is neither generalized Wigner nor block-constant with at most {MAX_CLASSES} classes"
                    )));
                }
                reps.len() - 1
            }
        };
    }
    let k = reps.len();
    let mut size = vec![0.0; k];
    for &c in &class {
        size[c] += 1.0;
    }
    let mut shat = vec![f64::NAN; k * k];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let slot = &mut shat[class[i] * k + class[j]];
                if slot.is_nan() {
                    *slot = s.get(i, j);
                } else if *slot != s.get(i, j) {
                    return Err(Error::invalid("profile off-diagonal entries are not block-constant"));
                }
            }
        }
    }
    for c in 0..k {
        if shat[c * k + c].is_nan() {
            shat[c * k + c] = s.get(reps[c], reps[c]);
        }
    }
    let mut diag = vec![0.0; k];
    let mut delta = vec![0.0; k];
    for i in 0..n {
        let c = class[i];
        diag[c] += s.get(i, i);
        delta[c] += s.get(i, i) - shat[c * k + c];
    }
    let k4 = entry_cumulants(law)[3];
    let mut quart = vec![0.0; k * k];
    for i in 0..n {
        for j in 0..n {
            let v = s.get(i, j);
            quart[class[i] * k + class[j]] += k4 * v * v;
        }
    }
    let t = (0..k * k).map(|cd| shat[cd] * size[cd % k]).collect();
    Ok(Reduced::Block {
        k,
        t,
        diag,
        delta,
        quart,
    })
}

/// Solve `-1/m_c = z + Σ_d t_cd m_d` for a class-reduced profile.
fn block_qve(k: usize, t: &[f64], z: Complex64) -> Result<Vec<Complex64>> {
    let mut m = vec![Complex64::new(0.0, 1.0); k];
    let tm =
        |m: &[Complex64]| -> Vec<Complex64> { (0..k).map(|c| (0..k).map(|d| t[c * k + d] * m[d]).sum()).collect() };
    for _ in 0..200 {
        let s = tm(&m);
        for c in 0..k {
            m[c] = 0.5 * m[c] - 0.5 / (z + s[c]);
        }
    }
    for _ in 0..50 {
        let s = tm(&m);
        let r: Vec<Complex64> = (0..k).map(|c| 1.0 / m[c] + z + s[c]).collect();
        let res = r.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if res < 1e-13 {
            return Ok(m);
        }
        let mut jac = vec![Complex64::new(0.0, 0.0); k * k];
        for c in 0..k {
            for d in 0..k {
                jac[c * k + d] = Complex64::new(t[c * k + d], 0.0);
            }
            jac[c * k + c] -= 1.0 / (m[c] * m[c]);
        }
        let neg: Vec<Complex64> = r.iter().map(|x| -x).collect();
        let dm = linalg::solve("reduced QVE Newton", k, &jac, &neg)?;
        for c in 0..k {
            m[c] += dm[c];
        }
    }
    let s = tm(&m);
    let res = (0..k).map(|c| (1.0 / m[c] + z + s[c]).norm()).fold(0.0, f64::max);
    if res < 1e-10 {
        Ok(m)
    } else {
        Err(Error::NonConvergence {
            what: "reduced QVE",
            iterations: 250,
            residual: res,
        })
    }
}

fn log_abs_det(k: usize, a: &mut [Complex64]) -> f64 {
    let mut s = 0.0;
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i * k + col].norm().total_cmp(&a[j * k + col].norm()))
            .unwrap();
        if piv != col {
            for c in 0..k {
                a.swap(piv * k + c, col * k + c);
            }
        }
        let p = a[col * k + col];
        s += p.norm().ln();
        for i in col + 1..k {
            let f = a[i * k + col] / p;
            for c in col..k {
                let v = a[col * k + c];
                a[i * k + c] -= f * v;
            }
        }
    }
    s
}

impl Reduced {
    fn m(&self, z: Complex64) -> Result<Vec<Complex64>> {
        match self {
            Reduced::Gw { .. } => Ok(vec![spectral::m_sc_unchecked(z)]),
            Reduced::Block { k, t, .. } => block_qve(*k, t, z),
        }
    }

    /// `Re L(z, w)` with
    /// `L = -2 log det(1 - S M(z)M(w)) - Σ_j σ²_jj m_j(z)m_j(w) + (1/2)Σ_{ja} κ₄(h_ja) m_a(z)m_j(z)m_a(w)m_j(w)`.
    fn potential(&self, a: &[Complex64], b: &[Complex64], work: &mut Vec<Complex64>) -> f64 {
        match self {
            Reduced::Gw { modes, trace, kappa } => {
                let p = a[0] * b[0];
                let mut s = 0.0;
                for &(l, mult) in modes {
                    s -= 2.0 * mult * (1.0 - l * p).norm().ln();
                }
                s - trace * p.re + 0.5 * kappa * (p * p).re
            }
            Reduced::Block {
                k,
                t,
                diag,
                delta,
                quart,
            } => {
                let k = *k;
                work.clear();
                work.resize(k * k, Complex64::new(0.0, 0.0));
                let d: Vec<Complex64> = (0..k).map(|c| a[c] * b[c]).collect();
                for c in 0..k {
                    for e in 0..k {
                        work[c * k + e] = -t[c * k + e] * d[e];
                    }
                    work[c * k + c] += 1.0;
                }
                let mut s = -2.0 * log_abs_det(k, work);
                for c in 0..k {
                    s += (2.0 * delta[c] - diag[c]) * d[c].re;
                    for e in 0..k {
                        s += 0.5 * quart[c * k + e] * (d[c] * d[e]).re;
                    }
                }
                s
            }
        }
    }
}

/// `-(1/2π²)∬ f'(x)f'(y) Re[L(x+iη, y+iη) - L(x+iη, y-iη)] dx dy`.
fn contour_level(f: &TestFunction, red: &Reduced, eta: f64, p: usize) -> Result<f64> {
    let (lo, hi) = f.support;
    let nodes = composite(&breakpoints(&f.features, lo, hi, eta), p);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut ms = Vec::new();
    for (&x, &w) in nodes.x.iter().zip(&nodes.w) {
        let d = f.df(x);
        if d == 0.0 {
            continue;
        }
        xs.push(x);
        ws.push(w * d);
        ms.push(red.m(Complex64::new(x, eta))?);
    }
    let conj: Vec<Vec<Complex64>> = ms.iter().map(|m| m.iter().map(|v| v.conj()).collect()).collect();
    let mut work = Vec::new();
    let mut s = 0.0;
    for i in 0..xs.len() {
        let mut row = 0.0;
        for j in i..xs.len() {
            let g = red.potential(&ms[i], &ms[j], &mut work) - red.potential(&ms[i], &conj[j], &mut work);
            row += if j == i { 0.5 } else { 1.0 } * ws[j] * g;
        }
        s += ws[i] * row;
    }
    Ok(-s / (PI * PI))
}

/// Variance of `Σ f(λ_i)` for a real Wigner-type matrix from the
/// covariance kernel of the resolvent traces, integrated on the contours of
/// `mesh` and extrapolated to the real axis.
pub fn variance_wigner_type(f: &TestFunction, s: &VarianceProfile, law: EntryLaw, mesh: &ContourMesh) -> Result<f64> {
    if !(mesh.eta > 0.0 && mesh.eta.is_finite()) || mesh.levels < 3 || mesh.nodes_per_panel < 2 {
        return Err(Error::invalid(
            "contour mesh needs eta > 0, at least 3 levels and 2 nodes per panel",
        ));
    }
    if !(mesh.a > 0.0 && mesh.a < 1.0) {
        return Err(Error::invalid("mesh parameter a must lie in (0, 1)"));
    }
    let lowest = mesh.eta / 2f64.powi(mesh.levels as i32 - 1);
    let omega = (s.n as f64).powf(-1.0 + mesh.a);
    if lowest > omega {
        return Err(Error::domain(
            "variance_wigner_type",
            format!("lowest contour {lowest:.3e} does not reach n^(-1+a) = {omega:.3e}; mesh too coarse"),
        ));
    }
    let (lo, hi) = f.support;
    let edge = f.f(lo).abs().max(f.f(hi).abs()).max(f.df(lo).abs()).max(f.df(hi).abs());
    if edge > 1e-10 {
        return Err(Error::domain(
            "variance_wigner_type",
            "test function does not vanish at the ends of its support; apply a cutoff",
        ));
    }
    let red = reduce(s, law)?;
    let mut v = Vec::with_capacity(mesh.levels);
    let mut eta = mesh.eta;
    for _ in 0..mesh.levels {
        v.push(contour_level(f, &red, eta, mesh.nodes_per_panel)?);
        eta *= 0.5;
    }
    // Repeated Richardson elimination of η, η², … with ratio 2.
    let floor = 1e-6 * (1.0 + f.norms[1] * f.norms[1]);
    let mut table = v;
    let mut prev_best = table[table.len() - 1];
    let mut order = 1;
    while table.len() > 1 {
        let f2 = 2f64.powi(order);
        let next: Vec<f64> = table.windows(2).map(|w| (f2 * w[1] - w[0]) / (f2 - 1.0)).collect();
        if next.len() == 1 {
            let best = next[0];
            let diff = (best - prev_best).abs();
            if diff > 5e-2 * best.abs().max(prev_best.abs()) && diff > floor {
                return Err(Error::NonConvergence {
                    what: "contour variance (mesh too coarse)",
                    iterations: mesh.levels,
                    residual: diff / best.abs().max(1e-300),
                });
            }
            return Ok(best);
        }
        prev_best = next[next.len() - 1];
        table = next;
        order += 1;
    }
    Ok(table[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{make_profile, ProfileKind};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn poly(c: &[f64]) -> TestFunction {
        TestFunction::polynomial(c).unwrap()
    }

    #[test]
    fn cutoff_is_c2() {
        assert_eq!(cutoff(2.9), 1.0);
        assert_eq!(cutoff(-4.1), 0.0);
        for x in [3.0, 4.0, -3.0, -4.0] {
            let h = 1e-7;
            assert!((cutoff(x + h) - cutoff(x - h)).abs() < 1e-12);
            assert!((cutoff_d1(x + h) - cutoff_d1(x - h)).abs() < 1e-10);
            assert!((cutoff_d2(x + h) - cutoff_d2(x - h)).abs() < 1e-5);
        }
        assert!((cutoff(3.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_mismatch_rejected() {
        let bad = TestFunction::new(
            Arc::new(|x: f64| x * x),
            Arc::new(|x: f64| x),
            Arc::new(|_| 1.0),
            (-4.0, 4.0),
            Smoothness::Smooth,
            Vec::new(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn constant_gives_zero_variance() {
        let s = make_profile(ProfileKind::Uniform, 40).unwrap();
        let v = variance_gw(&poly(&[1.0]), &s, EntryLaw::Rademacher, 1).unwrap();
        assert_eq!(v.main, 0.0);
        assert!(v.trace_s_term.abs() < 1e-14);
        assert!(v.quartic_term.abs() < 1e-14);
    }

    #[test]
    fn linear_and_quadratic_main() {
        assert!((variance_main(&poly(&[0.0, 1.0])).unwrap() - 2.0).abs() < 1e-12);
        assert!((variance_main(&poly(&[0.0, 0.0, 1.0])).unwrap() - 4.0).abs() < 1e-12);
        assert!((variance_main_symmetric(&poly(&[0.0, 1.0])).unwrap() - 2.0).abs() < 1e-12);
        assert!((variance_main_chebyshev(&poly(&[0.0, 0.0, 1.0]), 32) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_linear_total_is_exact() {
        // Var Tr H = Σ σ²_ii = 1
        let s = make_profile(ProfileKind::Uniform, 60).unwrap();
        let v = variance_gw(&poly(&[0.0, 1.0]), &s, EntryLaw::Gaussian, 1).unwrap();
        assert!((v.base() - 1.0).abs() < 1e-12, "{v:?}");
        assert!(v.epsilon_band < 1e-12);
        assert!(v.total_with_band.contains(1.0 - 1e-13) || (v.total_with_band.center() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn goe_linear_band_covers_truth() {
        // Var Tr H = Σ σ²_ii = 2 for GOE
        let s = make_profile(ProfileKind::Goe, 60).unwrap();
        let v = variance_gw(&poly(&[0.0, 1.0]), &s, EntryLaw::Gaussian, 1).unwrap();
        assert!(v.total_with_band.contains(2.0), "{v:?}");
        // Σ A_ii = Tr S - λ₁ with λ₁ = 1 + 1/n
        assert!((v.estimate() - 2.0).abs() < 3.0 / 60.0, "{v:?}");
    }

    #[test]
    fn rademacher_square_has_zero_variance() {
        // Tr H² = Σ h_ij² is deterministic for ±1/√n entries
        let s = make_profile(ProfileKind::Uniform, 50).unwrap();
        let v = variance_gw(&poly(&[0.0, 0.0, 1.0]), &s, EntryLaw::Rademacher, 1).unwrap();
        assert!((v.main - 4.0).abs() < 1e-12);
        assert!((v.quartic_term + 4.0).abs() < 1e-10);
        assert!(v.base().abs() < 1e-10);
    }

    #[test]
    fn gue_linear() {
        let s = make_profile(ProfileKind::Gue, 30).unwrap();
        let v = variance_gw(&poly(&[0.0, 1.0]), &s, EntryLaw::Gaussian, 2).unwrap();
        assert!((v.estimate() - 1.0).abs() < 1e-12, "{v:?}");
        assert!(v.flags.contains(&"beta2_halving".to_string()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn main_term_oracles_agree(c in proptest::collection::vec(-1.0f64..1.0, 7)) {
            let f = poly(&c);
            let a = variance_main(&f).unwrap();
            let b = variance_main_symmetric(&f).unwrap();
            let ch = variance_main_chebyshev(&f, 64);
            let scale = a.abs().max(1e-12);
            prop_assert!(a >= -1e-12);
            prop_assert!((a - b).abs() <= 1e-6 * scale, "{} vs {}", a, b);
            prop_assert!((a - ch).abs() <= 1e-6 * scale, "{} vs {}", a, ch);
        }
    }

    #[test]
    fn expectation_examples() {
        let s = make_profile(ProfileKind::Uniform, 20).unwrap();
        let e = expectation_terms(&poly(&[1.0]), &s, EntryLaw::Gaussian).unwrap();
        assert!((e.delta_gw_leading + 0.5).abs() < 1e-14);
        assert!((e.boundary_term - 0.5).abs() < 1e-14);
        assert!(e.s_ii_term.abs() < 1e-14);
        assert!(e.total.abs() < 1e-14);
        let e = expectation_terms(&poly(&[0.0, 1.0]), &s, EntryLaw::Rademacher).unwrap();
        for v in [e.delta_gw_leading, e.boundary_term, e.s_ii_term, e.quartic_term] {
            assert!(v.abs() < 1e-14);
        }
        let e = expectation_terms(&poly(&[0.0, 0.0, 1.0]), &s, EntryLaw::Gaussian).unwrap();
        assert!((e.delta_gw_leading + 1.0).abs() < 1e-13);
        assert!((e.boundary_term - 2.0).abs() < 1e-14);
        assert!(e.o1_ambiguity);
    }

    #[test]
    fn quartic_expectation_matches_fourth_moment() {
        // E Tr H⁴ picks up Σ_{i≠j} κ₄(h_ij) ≈ Σκ₄ from the fourth cumulant
        let s = make_profile(ProfileKind::Uniform, 20).unwrap();
        let e = expectation_terms(&poly(&[0.0, 0.0, 0.0, 0.0, 1.0]), &s, EntryLaw::Rademacher).unwrap();
        assert!((e.quartic_term - fourth_cumulant_sum(&s, EntryLaw::Rademacher, 1)).abs() < 1e-12);
    }

    #[test]
    fn delta_shift_examples() {
        assert_eq!(delta_shift(0.3, 100, 2).unwrap(), 0.0);
        assert!((delta_shift(2.0, 1000, 1).unwrap() + 1000f64.ln() / 6.0).abs() < 1e-12);
        assert!((delta_shift(2.0, 1000, 1).unwrap() + 1.15129).abs() < 1e-5);
        assert!((delta_shift(0.0, 1000, 1).unwrap() - 0.17329).abs() < 1e-5);
        let n = 1000;
        let cross = 2.0 - (n as f64).powf(-2.0 / 3.0);
        let l = delta_shift(cross - 1e-12, n, 1).unwrap();
        let r = delta_shift(cross + 1e-12, n, 1).unwrap();
        assert!((l - r).abs() < 1e-9);
        assert!(delta_shift(0.0, 1, 1).is_err());
    }

    #[test]
    fn covariance_exponent_examples() {
        let c = covariance_exponents(&[0.0, 0.0, 0.5], 1000, 1, None).unwrap();
        assert!((c.a[0][0] - 1.0502).abs() < 1e-4);
        assert!((c.a[0][0] - (1000f64.ln() + 2f64.sqrt().ln()) / 1000f64.ln()).abs() < 1e-12);
        assert!((c.a[0][2] - 0.10034).abs() < 1e-5);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.a[i][j], c.a[j][i]);
                assert_eq!(c.b[i][j], c.b[j][i]);
            }
        }
        let edge = covariance_exponents(&[2.0], 1000, 1, None).unwrap();
        assert_eq!(edge.b[0][0], 0.0);
        let ladder: Vec<f64> = (0..6).map(|k| 0.01 * 2f64.powi(k)).collect();
        let mut e = vec![0.0];
        e.extend(&ladder);
        let c = covariance_exponents(&e, 4096, 1, None).unwrap();
        for k in 1..e.len() - 1 {
            assert!(c.a[0][k] > c.a[0][k + 1]);
        }
        let q = covariance_exponents(&[0.0], 100, 1, Some(&[1, 50])).unwrap();
        assert!(q.c.unwrap()[0][1].is_finite());
        assert!(covariance_exponents(&[2.5], 100, 1, None).is_err());
    }

    #[test]
    fn char_curve_examples() {
        let c = char_curve(2.0, &[0.0, 1.0]).unwrap();
        assert_eq!(c[0], 1.0);
        assert!((c[1] - (-1f64).exp()).abs() < 1e-15);
        assert!(char_curve(-1.0, &[1.0]).is_err());
    }

    #[test]
    fn log_function_properties() {
        let n = 1000;
        let g = 0.5;
        let f = log_test_function(0.3, g, n, LogPart::Re).unwrap();
        assert!((f.f(1.5) - (1.2f64).ln()).abs() < 1e-3);
        assert!(f.norms[2] <= 10.0 * (n as f64).powf(g), "{:?}", f.norms);
        let fi = log_test_function(0.3, g, n, LogPart::Im).unwrap();
        assert!(fi.norms[2] <= 10.0 * (n as f64).powf(g));
        assert!(log_test_function(0.3, 1.0, n, LogPart::Re).is_err());
        let s = make_profile(ProfileKind::Goe, 400).unwrap();
        let v = variance_gw(&f, &s, EntryLaw::Gaussian, 1).unwrap();
        assert!(v.epsilon_band <= 5.0 * g * (400f64).ln(), "{v:?}");
        assert!(v.main > 0.0);
    }

    #[test]
    fn reduced_qve_matches_full_solver() {
        let s = VarianceProfile::two_block(40, 2.0, 0.5).unwrap();
        let red = reduce(&s, EntryLaw::Gaussian).unwrap();
        let z = Complex64::new(0.4, 0.05);
        let m = red.m(z).unwrap();
        let full = crate::qve::solve(&s, z, 1e-12).unwrap();
        assert!((m[0] - full.m[0]).norm() < 1e-10);
        assert!((m[1] - full.m[39]).norm() < 1e-10);
    }

    #[test]
    fn contour_matches_gw_formula() {
        let s = make_profile(ProfileKind::Uniform, 64).unwrap();
        let f = poly(&[0.0, 0.0, 1.0]).with_cutoff().unwrap();
        let gw = variance_gw(&f, &s, EntryLaw::Rademacher, 1).unwrap();
        let v = variance_wigner_type(&f, &s, EntryLaw::Rademacher, &ContourMesh::default()).unwrap();
        assert!(
            (v - gw.base()).abs() <= 5e-2 * gw.base().abs().max(1e-2),
            "{v} vs {gw:?}"
        );
        let lin = poly(&[0.0, 1.0]).with_cutoff().unwrap();
        let v = variance_wigner_type(&lin, &s, EntryLaw::Gaussian, &ContourMesh::default()).unwrap();
        assert!((v - 1.0).abs() < 5e-3, "{v}");
    }

    #[test]
    fn contour_constant_is_zero() {
        let s = make_profile(ProfileKind::Goe, 64).unwrap();
        let f = poly(&[1.0]).with_cutoff().unwrap();
        let v = variance_wigner_type(&f, &s, EntryLaw::Gaussian, &ContourMesh::default()).unwrap();
        assert!(v.abs() < 1e-3, "{v}");
    }

    #[test]
    fn block_and_gw_routes_agree() {
        // within + between = 2 keeps unit row sums
        let s = VarianceProfile::two_block(64, 1.5, 0.5).unwrap();
        assert!(s.exact_gw);
        let f = poly(&[0.0, 1.0, 0.5]).with_cutoff().unwrap();
        let gw = variance_wigner_type(&f, &s, EntryLaw::Gaussian, &ContourMesh::default()).unwrap();
        let mut blocky = s.clone();
        blocky.exact_gw = false;
        let bl = variance_wigner_type(&f, &blocky, EntryLaw::Gaussian, &ContourMesh::default()).unwrap();
        assert!((gw - bl).abs() < 1e-6 * gw.abs(), "{gw} vs {bl}");
    }
}
