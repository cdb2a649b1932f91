//! Quadrature rules.
//!
//! Everything on `[-2, 2]` goes through `x = 2 cos θ`, which turns the
//! arcsine weight `1/√(4-x²)` into `dθ` and the semicircle weight into
//! `4 sin²θ dθ`. Gauss–Legendre nodes come from `gauss-quad`.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let n = NonZeroUsize::new(n.max(1)).unwrap();
        let gl = GaussLegendre::new(n);
        let (nodes, weights) = gl.into_node_weight_pairs().into_vec().into_iter().unzip();
        Rule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn cached(n: usize) -> &'static Rule {
    static R10: OnceLock<Rule> = OnceLock::new();
    static R21: OnceLock<Rule> = OnceLock::new();
    match n {
        10 => R10.get_or_init(|| Rule::new(10)),
        21 => R21.get_or_init(|| Rule::new(21)),
        _ => unreachable!(),
    }
}

/// Adaptive Gauss–Legendre on `[a, b]`: a 10-point and a 21-point rule are
/// compared on each panel and the panel is bisected until they agree.
/// Integrable endpoint singularities are handled by repeated bisection.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Option<f64> {
        let lo = cached(10).integrate(a, b, f);
        let hi = cached(21).integrate(a, b, f);
        if !hi.is_finite() {
            return None;
        }
        if (hi - lo).abs() <= tol || (b - a).abs() < 1e-14 {
            return Some(hi);
        }
        if depth == 0 {
            return None;
        }
        let m = 0.5 * (a + b);
        Some(rec(f, a, m, 0.5 * tol, depth - 1)? + rec(f, m, b, 0.5 * tol, depth - 1)?)
    }
    rec(&f, a, b, tol, 48).ok_or(Error::NonConvergence {
        what: "adaptive quadrature",
        iterations: 48,
        residual: tol,
    })
}

/// `∫_{-2}^{2} f(x) / √(4-x²) dx` with an `n`-point rule in θ.
pub fn arcsine<F: FnMut(f64) -> f64>(n: usize, mut f: F) -> f64 {
    Rule::new(n).integrate(0.0, std::f64::consts::PI, |t| f(2.0 * t.cos()))
}

/// `∫_{-2}^{2} f(x) √(4-x²) dx` with an `n`-point rule in θ.
pub fn semicircle<F: FnMut(f64) -> f64>(n: usize, mut f: F) -> f64 {
    Rule::new(n).integrate(0.0, std::f64::consts::PI, |t| {
        let s = t.sin();
        4.0 * s * s * f(2.0 * t.cos())
    })
}

/// Evaluate an `n`-point arcsine rule twice (n and 2n) and fail if the
/// results disagree by more than `rel` relative.
pub fn arcsine_checked<F: Fn(f64) -> f64>(n: usize, rel: f64, f: F) -> Result<f64> {
    let a = arcsine(n, &f);
    let b = arcsine(2 * n, &f);
    let scale = b.abs().max(1e-300);
    if (a - b).abs() > rel * scale && (a - b).abs() > 1e-14 {
        return Err(Error::NonConvergence {
            what: "arcsine quadrature",
            iterations: 2 * n,
            residual: (a - b).abs() / scale,
        });
    }
    Ok(b)
}

/// Chebyshev coefficients of `θ ↦ f(2 cos θ)`, i.e. `f(2cosθ) = c₀/2 + Σ c_k cos kθ`,
/// from a type-I discrete cosine transform on `n+1` points.
pub fn chebyshev_coefficients<F: Fn(f64) -> f64>(n: usize, f: F) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let vals: Vec<f64> = (0..=n).map(|j| f(2.0 * (pi * j as f64 / n as f64).cos())).collect();
    (0..=n)
        .map(|k| {
            let mut s = 0.5 * (vals[0] + vals[n] * if k % 2 == 0 { 1.0 } else { -1.0 });
            for (j, v) in vals.iter().enumerate().take(n).skip(1) {
                s += v * (pi * (k * j) as f64 / n as f64).cos();
            }
            let c = 2.0 * s / n as f64;
            if k == n {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}
