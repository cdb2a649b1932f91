//! Symmetric tridiagonal matrices and the Dumitriu–Edelman models of GOE / GUE.
//!
//! A GOE (β = 1) or GUE (β = 2) matrix normalised as in [`crate::ensemble`]
//! is orthogonally/unitarily similar to the real tridiagonal matrix with
//!
//! * diagonal `a_k ~ N(0, 2/(βN))`,
//! * off-diagonal `b_k = χ_{β(N-k)} / √(βN)`, `k = 1..N-1`,
//!
//! all independent. The spectrum therefore has exactly the same law, and
//! determinants, counts and Stieltjes transforms cost `O(N)` through the
//! three-term recurrence instead of `O(N³)` for a dense eigensolve.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tridiagonal {
    /// Diagonal, length n.
    pub a: Vec<f64>,
    /// Off-diagonal, length n-1.
    pub b: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || b.len() + 1 != a.len() {
            return Err(Error::invalid(format!(
                "tridiagonal needs n >= 1 diagonal and n-1 off-diagonal entries, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite tridiagonal entry"));
        }
        Ok(Tridiagonal { a, b })
    }

    /// Sample the β-Hermite tridiagonal model (β ∈ {1, 2}).
    pub fn gaussian<R: Rng + ?Sized>(n: usize, beta: u8, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if beta != 1 && beta != 2 {
            return Err(Error::invalid(format!("beta must be 1 or 2, got {beta}")));
        }
        let bn = f64::from(beta) * n as f64;
        let sd = (2.0 / bn).sqrt();
        let a = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let b = (1..n)
            .map(|k| {
                let dof = f64::from(beta) * (n - k) as f64;
                let chi2 = ChiSquared::new(dof).expect("positive degrees of freedom");
                (chi2.sample(rng) / bn).sqrt()
            })
            .collect();
        Ok(Tridiagonal { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn trace(&self) -> f64 {
        self.a.iter().sum()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = self.a[i];
        }
        for (i, &b) in self.b.iter().enumerate() {
            m[i * n + i + 1] = b;
            m[(i + 1) * n + i] = b;
        }
        m
    }

    /// All eigenvalues, ascending, by implicit QL with Wilkinson shifts.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.n();
        let mut d = self.a.clone();
        let mut e = self.b.clone();
        e.push(0.0);
        for l in 0..n {
            let mut iter = 0;
            loop {
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= f64::EPSILON * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > 60 {
                    return Err(Error::NonConvergence {
                        what: "tridiagonal QL",
                        iterations: iter,
                        residual: e[l].abs(),
                    });
                }
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = g.hypot(1.0);
                g = d[m] - d[l] + e[l] / (g + r.copysign(g));
                let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
                let mut i = m;
                let mut deflated = false;
                while i > l {
                    i -= 1;
                    let f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        deflated = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if deflated {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
        d.sort_by(f64::total_cmp);
        Ok(d)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0f64;
        for k in 0..self.n() {
            let off = if k == 0 { 0.0 } else { self.b[k - 1] * self.b[k - 1] / q };
            q = self.a[k] - x - off;
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Number of eigenvalues in the half-open interval `[lo, hi)`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.count_below(hi).saturating_sub(self.count_below(lo))
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.b[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.b[i].abs() } else { 0.0 };
            lo = lo.min(self.a[i] - r);
            hi = hi.max(self.a[i] + r);
        }
        (lo, hi)
    }

    /// The k-th smallest eigenvalue (1-based) by bisection on the Sturm count.
    pub fn kth_eigenvalue(&self, k: usize) -> Result<f64> {
        let n = self.n();
        if k == 0 || k > n {
            return Err(Error::invalid(format!("index {k} outside 1..={n}")));
        }
        let (mut lo, mut hi) = self.gershgorin();
        lo -= 1e-12;
        hi += 1e-12;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The recurrence `r_1 = z - a_1`, `r_k = z - a_k - b²_{k-1}/r_{k-1}`,
    /// whose product is `det(z - H)`, together with `r_k'`.
    fn ratios(&self, z: Complex64) -> Result<Vec<(Complex64, Complex64)>> {
        let mut out = Vec::with_capacity(self.n());
        let mut prev: Option<(Complex64, Complex64)> = None;
        for k in 0..self.n() {
            let (r, dr) = match prev {
                None => (z - self.a[0], Complex64::new(1.0, 0.0)),
                Some((rp, drp)) => {
                    let b2 = self.b[k - 1] * self.b[k - 1];
                    (z - self.a[k] - b2 / rp, 1.0 + b2 * drp / (rp * rp))
                }
            };
            if r == Complex64::new(0.0, 0.0) || !r.re.is_finite() || !r.im.is_finite() {
                return Err(Error::domain(
                    "tridiagonal determinant",
                    format!("evaluation point {z} hits the spectrum of a leading minor"),
                ));
            }
            out.push((r, dr));
            prev = Some((r, dr));
        }
        Ok(out)
    }

    /// `Σ_j log(z - λ_j)` with each logarithm on the principal branch and
    /// negative reals taken from above (`Im = π`).
    ///
    /// For `Im z > 0` every `r_k` stays in the upper half plane, so
    /// `Σ Log r_k` equals the eigenvalue sum exactly, not only modulo `2πi`.
    /// On the real axis `#{r_k < 0} = #{λ_j > E}`.
    pub fn log_det_shift(&self, z: Complex64) -> Result<Complex64> {
        if z.im < 0.0 {
            return Ok(self.log_det_shift(z.conj())?.conj());
        }
        let rs = self.ratios(z)?;
        let mut re = 0.0;
        let mut im = 0.0;
        for (r, _) in rs {
            re += r.norm().ln();
            im += if z.im == 0.0 {
                if r.re < 0.0 {
                    std::f64::consts::PI
                } else {
                    0.0
                }
            } else {
                r.arg()
            };
        }
        Ok(Complex64::new(re, im))
    }

    /// Normalised Stieltjes transform `(1/n) Σ 1/(λ_j - z)`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        let rs = self.ratios(z)?;
        let s: Complex64 = rs.iter().map(|(r, dr)| dr / r).sum();
        Ok(-s / self.n() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn sample(n: usize, beta: u8, seed: u64) -> Tridiagonal {
        Tridiagonal::gaussian(n, beta, &mut stream(seed, "tri-test", &[])).unwrap()
    }

    #[test]
    fn ql_matches_dense_eigensolver() {
        let t = sample(40, 1, 3);
        let ql = t.eigenvalues().unwrap();
        let dense = crate::linalg::symmetric_eigenvalues(40, &t.to_dense()).unwrap();
        for (a, b) in ql.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn sturm_bisection_matches_ql() {
        let t = sample(60, 2, 9);
        let ev = t.eigenvalues().unwrap();
        for k in [1, 7, 30, 60] {
            assert!((t.kth_eigenvalue(k).unwrap() - ev[k - 1]).abs() < 1e-12);
        }
        let mid = 0.5 * (ev[10] + ev[11]);
        assert_eq!(t.count_below(mid), 11);
    }

    #[test]
    fn log_det_matches_eigenvalue_sum() {
        let t = sample(50, 1, 5);
        let ev = t.eigenvalues().unwrap();
        for z in [
            Complex64::new(0.3, 0.01),
            Complex64::new(-1.7, 1e-4),
            Complex64::new(2.5, 0.0),
        ] {
            let direct: Complex64 = ev
                .iter()
                .map(|l| {
                    let w = z - l;
                    if w.im == 0.0 && w.re < 0.0 {
                        Complex64::new((-w.re).ln(), std::f64::consts::PI)
                    } else {
                        w.ln()
                    }
                })
                .sum();
            let rec = t.log_det_shift(z).unwrap();
            assert!((direct - rec).norm() < 1e-9, "{z}: {direct} vs {rec}");
        }
    }

    #[test]
    fn real_axis_counts_eigenvalues_above() {
        let t = sample(80, 2, 11);
        let ev = t.eigenvalues().unwrap();
        let e = 0.5 * (ev[49] + ev[50]);
        let l = t.log_det_shift(Complex64::new(e, 0.0)).unwrap();
        assert!((l.im / std::f64::consts::PI - 30.0).abs() < 1e-9);
    }

    #[test]
    fn stieltjes_matches_eigenvalue_sum() {
        let t = sample(30, 1, 1);
        let ev = t.eigenvalues().unwrap();
        let z = Complex64::new(0.2, 0.05);
        let direct: Complex64 = ev.iter().map(|l| 1.0 / (l - z)).sum::<Complex64>() / 30.0;
        assert!((direct - t.stieltjes(z).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn moments_match_gaussian_ensemble() {
        // E Tr H² = n·(n-1)/n + 2 = n + 1 for GOE, n for GUE.
        let n = 20;
        let reps = 4000;
        for (beta, target) in [(1u8, 21.0), (2u8, 20.0)] {
            let mut acc = 0.0;
            for r in 0..reps {
                let t = Tridiagonal::gaussian(n, beta, &mut stream(17, "mom", &[r])).unwrap();
                acc += t.a.iter().map(|a| a * a).sum::<f64>() + 2.0 * t.b.iter().map(|b| b * b).sum::<f64>();
            }
            let m = acc / reps as f64;
            assert!((m - target).abs() < 0.3, "beta {beta}: {m}");
        }
    }

    proptest! {
        #[test]
        fn trace_and_count_invariants(seed in 0u64..1000, n in 1usize..40) {
            let t = sample(n, 1, seed);
            let ev = t.eigenvalues().unwrap();
            prop_assert!((ev.iter().sum::<f64>() - t.trace()).abs() < 1e-10 * n as f64);
            prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(t.count_below(ev[n - 1] + 1.0), n);
            prop_assert_eq!(t.count_below(ev[0] - 1.0), 0);
        }
    }
}
