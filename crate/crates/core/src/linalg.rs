//! Dense linear algebra on row-major buffers, backed by faer.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::{Error, Result};

/// Eigenvalues of a real symmetric matrix stored row-major, ascending.
pub fn symmetric_eigenvalues(n: usize, a: &[f64]) -> std::result::Result<Vec<f64>, String> {
    assert_eq!(a.len(), n * n);
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| format!("{e:?}"))
}

/// Eigenvalues of a complex Hermitian matrix stored row-major, ascending.
pub fn hermitian_eigenvalues(n: usize, a: &[Complex64]) -> std::result::Result<Vec<f64>, String> {
    assert_eq!(a.len(), n * n);
    let m = Mat::<Complex64>::from_fn(n, n, |i, j| a[i * n + j]);
    m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| format!("{e:?}"))
}

fn to_mat(n: usize, a: &[Complex64]) -> Mat<Complex64> {
    Mat::<Complex64>::from_fn(n, n, |i, j| a[i * n + j])
}

fn check_finite(what: &'static str, v: &[Complex64]) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Singular(what))
    }
}

/// Solve `A x = b` for a dense complex `A` (row-major) by partial-pivot LU.
pub fn solve(what: &'static str, n: usize, a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    assert_eq!(b.len(), n);
    let lu = to_mat(n, a).partial_piv_lu();
    let mut rhs = Mat::<Complex64>::from_fn(n, 1, |i, _| b[i]);
    lu.solve_in_place(rhs.as_mut());
    let x: Vec<Complex64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    check_finite(what, &x)?;
    Ok(x)
}

/// Dense inverse, row-major.
pub fn inverse(what: &'static str, n: usize, a: &[Complex64]) -> Result<Vec<Complex64>> {
    let inv = to_mat(n, a).partial_piv_lu().inverse();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(inv[(i, j)]);
        }
    }
    check_finite(what, &out)?;
    Ok(out)
}

/// Induced 2-norm of a dense complex matrix (largest singular value).
pub fn operator_norm(n: usize, a: &[Complex64]) -> f64 {
    let m = to_mat(n, a);
    match m.singular_values() {
        Ok(s) => s.into_iter().fold(0.0, f64::max),
        Err(_) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_inverse_agree_on_small_system() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let a = vec![c(2.0, 1.0), c(0.5, 0.0), c(-1.0, 0.3), c(3.0, -0.2)];
        let b = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let x = solve("test", 2, &a, &b).unwrap();
        let r0 = a[0] * x[0] + a[1] * x[1] - b[0];
        let r1 = a[2] * x[0] + a[3] * x[1] - b[1];
        assert!(r0.norm() < 1e-14 && r1.norm() < 1e-14);
        let inv = inverse("test", 2, &a).unwrap();
        let y0 = inv[0] * b[0] + inv[1] * b[1];
        assert!((y0 - x[0]).norm() < 1e-14);
    }

    #[test]
    fn eigenvalues_sorted() {
        let a = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(symmetric_eigenvalues(3, &a).unwrap(), vec![-1.0, 2.0, 3.0]);
    }
}
