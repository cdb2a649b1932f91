//! The quadratic vector equation `-1/m_i = z + (S m)_i` for a variance
//! profile `S = (σ²_ij)`, and the linear operators built from its solution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{MatrixSample, VarianceProfile};
use crate::spectral::{self, ComplexEnergy};
use crate::{linalg, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QveSolution {
    pub z: ComplexEnergy,
    pub m: Vec<Complex64>,
    /// `max_i |1/m_i + z + (Sm)_i|`.
    pub residual: f64,
    pub iterations: usize,
}

impl QveSolution {
    pub fn from_json(s: &str) -> Result<Self> {
        let sol: QveSolution = serde_json::from_str(s)?;
        if sol.m.is_empty() || sol.m.iter().any(|m| !m.re.is_finite() || !m.im.is_finite()) {
            return Err(Error::invalid("QVE solution vector is empty or non-finite"));
        }
        if !sol.residual.is_finite() || sol.residual < 0.0 {
            return Err(Error::invalid("QVE residual must be a nonnegative number"));
        }
        Ok(sol)
    }

    pub fn mean(&self) -> Complex64 {
        self.m.iter().sum::<Complex64>() / self.m.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub omega: f64,
    pub max_fixed_point: usize,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            omega: 0.5,
            max_fixed_point: 200,
            max_newton: 100,
        }
    }
}

fn apply(s: &VarianceProfile, m: &[Complex64]) -> Vec<Complex64> {
    let n = s.n;
    (0..n)
        .map(|i| s.sigma2[i * n..(i + 1) * n].iter().zip(m).map(|(a, b)| a * b).sum())
        .collect()
}

fn residual(s: &VarianceProfile, z: Complex64, m: &[Complex64]) -> f64 {
    let sm = apply(s, m);
    m.iter()
        .zip(&sm)
        .map(|(mi, smi)| (1.0 / mi + z + smi).norm())
        .fold(0.0, f64::max)
}

/// Solve with default options and tolerance `tol`.
pub fn solve(s: &VarianceProfile, z: Complex64, tol: f64) -> Result<QveSolution> {
    solve_with(
        s,
        z,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
        None,
    )
}

/// Damped fixed point `m ← (1-ω)m + ω(-1/(z + Sm))` started at `m_sc(z)`
/// (or `guess`), with `ω` halved whenever the residual grows. If the fixed
/// point has not reached `tol` after `max_fixed_point` sweeps, damped Newton
/// steps on `1 + m_i (z + (Sm)_i) = 0` finish the job.
pub fn solve_with(
    s: &VarianceProfile,
    z: Complex64,
    opts: &SolverOptions,
    guess: Option<&[Complex64]>,
) -> Result<QveSolution> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain("qve::solve", format!("Im z = {} must be positive", z.im)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("QVE tolerance must be positive"));
    }
    let n = s.n;
    let mut m: Vec<Complex64> = match guess {
        Some(g) if g.len() == n && g.iter().all(|x| x.im > 0.0) => g.to_vec(),
        _ => vec![spectral::m_sc_unchecked(z); n],
    };
    let mut res = residual(s, z, &m);
    let mut omega = opts.omega;
    let mut iterations = 0;
    while res > opts.tol && iterations < opts.max_fixed_point {
        iterations += 1;
        let sm = apply(s, &m);
        let next: Vec<Complex64> = m
            .iter()
            .zip(&sm)
            .map(|(mi, smi)| (1.0 - omega) * mi - omega / (z + smi))
            .collect();
        let r = residual(s, z, &next);
        if r > res {
            omega *= 0.5;
            if omega < 1e-6 {
                break;
            }
        }
        if next.iter().all(|x| x.im > 0.0) && r.is_finite() {
            m = next;
            res = r;
        }
    }
    let mut newton = 0;
    while res > opts.tol && newton < opts.max_newton {
        newton += 1;
        let sm = apply(s, &m);
        let mut jac = vec![Complex64::new(0.0, 0.0); n * n];
        let mut f = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            f[i] = -(1.0 + m[i] * (z + sm[i]));
            for j in 0..n {
                jac[i * n + j] = m[i] * s.sigma2[i * n + j];
            }
            jac[i * n + i] += z + sm[i];
        }
        let step = linalg::solve("QVE Newton step", n, &jac, &f)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<Complex64> = m.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            if trial.iter().all(|x| x.im > 0.0) {
                let r = residual(s, z, &trial);
                if r < res {
                    m = trial;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !(res <= opts.tol) {
        return Err(Error::NonConvergence {
            what: "QVE solver",
            iterations: iterations + newton,
            residual: res,
        });
    }
    Ok(QveSolution {
        z: z.into(),
        m,
        residual: res,
        iterations: iterations + newton,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub e: f64,
    pub rho: f64,
    /// `(η, (1/(πn)) Σ Im m_i)` along the sequence.
    pub trace: Vec<(f64, f64)>,
    /// Set when the last three values are not monotone in η.
    pub warning: bool,
}

/// Geometric η sequence from 1e-1 down to 1e-6.
pub fn default_eta_sequence() -> Vec<f64> {
    (0..=10).map(|k| 10f64.powf(-1.0 - 0.5 * k as f64)).collect()
}

/// Self-consistent density at `E`, extrapolated to `η = 0` by the
/// quadratic through the last three points of `etas` (Richardson).
pub fn density(s: &VarianceProfile, e: f64, etas: &[f64]) -> Result<DensityEstimate> {
    if etas.len() < 3 {
        return Err(Error::invalid("density needs at least three η values"));
    }
    if etas.windows(2).any(|w| !(w[1] < w[0])) || etas.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("η sequence must be positive and strictly decreasing"));
    }
    let n = s.n as f64;
    let mut guess: Option<Vec<Complex64>> = None;
    let mut trace = Vec::with_capacity(etas.len());
    for &eta in etas {
        let sol = solve_with(
            s,
            Complex64::new(e, eta),
            &SolverOptions {
                tol: 1e-13,
                ..SolverOptions::default()
            },
            guess.as_deref(),
        )?;
        let v = sol.m.iter().map(|m| m.im).sum::<f64>() / (std::f64::consts::PI * n);
        trace.push((eta, v));
        guess = Some(sol.m);
    }
    let k = trace.len();
    let (x0, y0) = trace[k - 3];
    let (x1, y1) = trace[k - 2];
    let (x2, y2) = trace[k - 1];
    // Lagrange interpolant evaluated at 0.
    let l0 = x1 * x2 / ((x0 - x1) * (x0 - x2));
    let l1 = x0 * x2 / ((x1 - x0) * (x1 - x2));
    let l2 = x0 * x1 / ((x2 - x0) * (x2 - x1));
    let rho = (l0 * y0 + l1 * y1 + l2 * y2).max(0.0);
    let monotone = (y0 <= y1 && y1 <= y2) || (y0 >= y1 && y1 >= y2);
    Ok(DensityEstimate {
        e,
        rho,
        trace,
        warning: !monotone,
    })
}

/// `(I - diag(d) S)` (or `(I - S diag(d))` when `transposed`), row-major.
fn stability_matrix(s: &VarianceProfile, d: &[Complex64], transposed: bool) -> Vec<Complex64> {
    let n = s.n;
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let f = if transposed { d[j] } else { d[i] };
            a[i * n + j] = -f * s.sigma2[i * n + j];
        }
        a[i * n + i] += 1.0;
    }
    a
}

/// `m' = dm/dz`, from `(I - diag(m²) S) m' = m²`.
pub fn m_derivative(sol: &QveSolution, s: &VarianceProfile) -> Result<Vec<Complex64>> {
    let m2: Vec<Complex64> = sol.m.iter().map(|m| m * m).collect();
    let a = stability_matrix(s, &m2, false);
    linalg::solve("stability operator (m')", s.n, &a, &m2)
}

/// Solve `(I - diag(m(z)m(w)) S) x = rhs`, or `(I - S diag(m(z)m(w))) x = rhs`
/// when `transposed`.
pub fn stability_solve(
    s: &VarianceProfile,
    mz: &QveSolution,
    mw: &QveSolution,
    rhs: &[Complex64],
    transposed: bool,
) -> Result<Vec<Complex64>> {
    if rhs.len() != s.n {
        return Err(Error::invalid("right-hand side has the wrong length"));
    }
    let d: Vec<Complex64> = mz.m.iter().zip(&mw.m).map(|(a, b)| a * b).collect();
    linalg::solve("stability operator", s.n, &stability_matrix(s, &d, transposed), rhs)
}

/// Dense inverse of `I - diag(m(z)m(w)) S`.
pub fn stability_inverse(s: &VarianceProfile, mz: &QveSolution, mw: &QveSolution) -> Result<Vec<Complex64>> {
    let d: Vec<Complex64> = mz.m.iter().zip(&mw.m).map(|(a, b)| a * b).collect();
    linalg::inverse("stability operator", s.n, &stability_matrix(s, &d, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FDecomposition {
    pub lambda1: f64,
    /// Perron vector, unit ℓ² norm, positive.
    pub v: Vec<f64>,
    /// `F - λ₁ v vᵀ`, row-major.
    pub a: Vec<f64>,
    /// Largest magnitude eigenvalue of `a`.
    pub second: f64,
    pub gap: f64,
    pub f: Vec<f64>,
}

fn power_iteration(n: usize, a: &[f64], start: &[f64]) -> (f64, Vec<f64>) {
    let mut v = start.to_vec();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = a[i * n..(i + 1) * n].iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        let new_lambda: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (0.0, v);
        }
        w.iter_mut().for_each(|x| *x /= norm);
        let change = if new_lambda >= 0.0 {
            w.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        } else {
            w.iter().zip(&v).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max)
        };
        v = w;
        if change < 1e-14 && (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs().max(1e-300) {
            return (new_lambda, v);
        }
        lambda = new_lambda;
    }
    (lambda, v)
}

/// `F = |m(z)m(w)|^{1/2} S |m(z)m(w)|^{1/2}` and its Perron decomposition by
/// power iteration with deflation.
pub fn f_operator(s: &VarianceProfile, mz: &QveSolution, mw: &QveSolution) -> Result<FDecomposition> {
    let n = s.n;
    let d: Vec<f64> = mz.m.iter().zip(&mw.m).map(|(a, b)| (a * b).norm().sqrt()).collect();
    let mut f = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            f[i * n + j] = d[i] * s.sigma2[i * n + j] * d[j];
        }
    }
    let (lambda1, mut v) = power_iteration(n, &f, &vec![1.0; n]);
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let mut a = f.clone();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] -= lambda1 * v[i] * v[j];
        }
    }
    let start: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).sin()).collect();
    let (second, _) = power_iteration(n, &a, &start);
    let gap = lambda1 - second.abs();
    if gap < 1e-10 {
        return Err(Error::NonConvergence {
            what: "power iteration on F (no spectral gap below the Perron eigenvalue)",
            iterations: 20_000,
            residual: gap,
        });
    }
    Ok(FDecomposition {
        lambda1,
        v,
        a,
        second,
        gap,
        f,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TComparison {
    pub numerical: Vec<Complex64>,
    pub predicted: Vec<Complex64>,
    pub max_deviation: f64,
    pub median_deviation: f64,
}

/// `T_xy = (1/n) Σ_i s_ix G_iy(z) G_yi(w)` with `s = nσ²` from the dense
/// resolvents of `sample`, against `[(1 - S mm)^{-1} S mm]_xy` where
/// `(S mm)_xj = σ²_xj m_j(z) m_j(w)`.
pub fn t_operator(s: &VarianceProfile, z: Complex64, w: Complex64, sample: &MatrixSample) -> Result<TComparison> {
    let n = s.n;
    if sample.n != n {
        return Err(Error::invalid("sample and profile dimensions differ"));
    }
    let gz = spectral::resolvent(sample, z)?;
    let gw = spectral::resolvent(sample, w)?;
    let mut numerical = vec![Complex64::new(0.0, 0.0); n * n];
    for x in 0..n {
        for y in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                acc += s.sigma2[i * n + x] * gz[i * n + y] * gw[y * n + i];
            }
            numerical[x * n + y] = acc;
        }
    }
    let predicted = t_prediction(s, z, w)?;
    let mut dev: Vec<f64> = numerical.iter().zip(&predicted).map(|(a, b)| (a - b).norm()).collect();
    let max_deviation = dev.iter().copied().fold(0.0, f64::max);
    dev.sort_by(f64::total_cmp);
    let median_deviation = dev[dev.len() / 2];
    Ok(TComparison {
        numerical,
        predicted,
        max_deviation,
        median_deviation,
    })
}

/// Deterministic `[(1 - S mm)^{-1} S mm]`, row-major.
pub fn t_prediction(s: &VarianceProfile, z: Complex64, w: Complex64) -> Result<Vec<Complex64>> {
    let n = s.n;
    let (mz, mw) = (solve_any(s, z)?, solve_any(s, w)?);
    let d: Vec<Complex64> = mz.iter().zip(&mw).map(|(a, b)| a * b).collect();
    let mut smm = vec![Complex64::new(0.0, 0.0); n * n];
    for x in 0..n {
        for j in 0..n {
            smm[x * n + j] = s.sigma2[x * n + j] * d[j];
        }
    }
    let inv = linalg::inverse("T prediction", n, &stability_matrix(s, &d, true))?;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for x in 0..n {
        for y in 0..n {
            out[x * n + y] = (0..n).map(|k| inv[x * n + k] * smm[k * n + y]).sum();
        }
    }
    Ok(out)
}

/// QVE solution for any non-real `z`, using `m(z̄) = conj m(z)`.
pub fn solve_any(s: &VarianceProfile, z: Complex64) -> Result<Vec<Complex64>> {
    if z.im < 0.0 {
        Ok(solve(s, z.conj(), 1e-13)?.m.iter().map(|m| m.conj()).collect())
    } else {
        Ok(solve(s, z, 1e-13)?.m)
    }
}

/// `κ(z) = κ(Re z) + Im z`.
pub fn kappa_z(z: Complex64) -> f64 {
    spectral::kappa(z.re) + z.im.abs()
}
