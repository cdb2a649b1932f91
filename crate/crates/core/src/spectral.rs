//! Semicircle quantities, spectra and the log-characteristic polynomial.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use ode_solvers::{Dop853, OutputType, System, Vector2};
use serde::{Deserialize, Serialize};

use crate::ensemble::{Entries, MatrixSample};
use crate::tridiag::Tridiagonal;
use crate::{linalg, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSource {
    pub profile: String,
    pub beta: u8,
    pub seed: Option<u64>,
}

/// Sorted eigenvalues of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub n: usize,
    pub lambdas: Vec<f64>,
    pub source: SpectrumSource,
}

impl Spectrum {
    /// Sorts the input. Fails on empty or non-finite input.
    pub fn new(mut lambdas: Vec<f64>, source: SpectrumSource) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::invalid("empty spectrum"));
        }
        if lambdas.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite eigenvalue"));
        }
        lambdas.sort_by(f64::total_cmp);
        Ok(Spectrum {
            n: lambdas.len(),
            lambdas,
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.lambdas.len() != self.n {
            return Err(Error::invalid(format!(
                "spectrum declares n = {} but holds {} values",
                self.n,
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite eigenvalue"));
        }
        if self.lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("spectrum is not sorted"));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sp: Spectrum = serde_json::from_str(s)?;
        sp.validate()?;
        Ok(sp)
    }

    /// One eigenvalue per row under a `lambda` header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lambda"])?;
        for x in &self.lambdas {
            wr.write_record([format!("{x:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, source: SpectrumSource) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = rec.get(0).ok_or_else(|| Error::invalid("empty CSV row"))?;
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("not a number: '{field}'")))?;
            out.push(x);
        }
        Spectrum::new(out, source)
    }
}

/// `z = E + iη`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnergy {
    pub e: f64,
    pub eta: f64,
}

impl ComplexEnergy {
    pub fn new(e: f64, eta: f64) -> Self {
        ComplexEnergy { e, eta }
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }
}

impl From<Complex64> for ComplexEnergy {
    fn from(z: Complex64) -> Self {
        ComplexEnergy { e: z.re, eta: z.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub kappa: f64,
    pub ell: f64,
}

pub fn kappa(e: f64) -> f64 {
    (e + 2.0).abs().min((e - 2.0).abs())
}

/// Distance to the edge and typical eigenvalue spacing at `E`.
pub fn scale_params(e: f64, n: usize) -> ScaleParams {
    let nf = n as f64;
    let k = kappa(e);
    let edge = nf.powf(-2.0 / 3.0);
    let ell = if e >= -2.0 + edge && e <= 2.0 - edge {
        1.0 / (nf * k.sqrt())
    } else {
        edge
    };
    ScaleParams { kappa: k, ell }
}

/// Semicircle density.
pub fn rho(x: f64) -> f64 {
    (4.0 - x * x).max(0.0).sqrt() / (2.0 * PI)
}

fn positive_zero(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        Complex64::new(z.re, 0.0)
    } else {
        z
    }
}

/// `√(z²-4)` on the branch analytic off `[-2, 2]` with `√(z²-4) ~ z` at
/// infinity; on the cut the boundary value from above.
pub fn sqrt_z2_minus_4(z: Complex64) -> Complex64 {
    let z = positive_zero(z);
    (z - 2.0).sqrt() * (z + 2.0).sqrt()
}

/// Stieltjes transform of the semicircle law.
pub fn m_sc(z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain("m_sc", "non-finite argument"));
    }
    if z.im == 0.0 && z.re.abs() < 2.0 {
        return Err(Error::domain("m_sc", format!("{} lies on the cut (-2, 2)", z.re)));
    }
    Ok(m_sc_unchecked(z))
}

pub(crate) fn m_sc_unchecked(z: Complex64) -> Complex64 {
    0.5 * (-z + sqrt_z2_minus_4(z))
}

/// Semicircle distribution function.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        return 0.0;
    }
    if x >= 2.0 {
        return 1.0;
    }
    0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
}

/// Classical location `γ_k` with `F(γ_k) = k/n`.
pub fn quantile(k: usize, n: usize) -> Result<f64> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::invalid(format!("quantile index {k} outside 1..={n}")));
    }
    if k == n {
        return Ok(2.0);
    }
    if 2 * k == n {
        return Ok(0.0);
    }
    let p = k as f64 / n as f64;
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if semicircle_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = rho(x);
        if d <= 0.0 {
            break;
        }
        let next = x - (semicircle_cdf(x) - p) / d;
        if !(next > -2.0 && next < 2.0) {
            break;
        }
        x = next;
    }
    Ok(x)
}

pub fn quantiles(n: usize) -> Vec<f64> {
    (1..=n).map(|k| quantile(k, n).expect("valid index")).collect()
}

fn log_from_above(w: Complex64) -> Complex64 {
    positive_zero(w).ln()
}

/// `U(z) = ∫ log(z - x) ρ(x) dx`, closed form.
pub fn log_potential(z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain("log_potential", "non-finite argument"));
    }
    if z.im == 0.0 && z.re <= -2.0 {
        return Err(Error::domain(
            "log_potential",
            format!("{} lies on the branch cut (-inf, -2]", z.re),
        ));
    }
    Ok(log_potential_above(z))
}

/// As [`log_potential`], with real arguments below `-2` taken from above.
pub(crate) fn log_potential_above(z: Complex64) -> Complex64 {
    let z = positive_zero(z);
    let s = sqrt_z2_minus_4(z);
    z * z / 4.0 - z * s / 4.0 + log_from_above(z + s) - 2f64.ln() - 0.5
}

/// Normalised Stieltjes transform `(1/n) Σ 1/(λ_k - z)` of a spectrum.
pub fn stieltjes(spec: &Spectrum, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && spec.lambdas.contains(&z.re) {
        return Err(Error::domain("stieltjes", format!("{} is an eigenvalue", z.re)));
    }
    let s: Complex64 = spec.lambdas.iter().map(|&l| 1.0 / (l - z)).sum();
    Ok(s / spec.n as f64)
}

/// `L_N(z) = Σ log(z - λ_j) - n U(z)`, summed term by term. Real `z` takes
/// every logarithm from above, so `Im Σ log(E - λ_j) = π #{λ_j > E}`.
pub fn log_char_poly(spec: &Spectrum, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && spec.lambdas.contains(&z.re) {
        return Err(Error::domain(
            "log_char_poly",
            format!("evaluation point {} coincides with an eigenvalue", z.re),
        ));
    }
    let (zz, flip) = if z.im < 0.0 { (z.conj(), true) } else { (z, false) };
    let sum: Complex64 = spec.lambdas.iter().map(|&l| log_from_above(zz - l)).sum();
    let out = sum - spec.n as f64 * log_potential_above(zz);
    Ok(if flip { out.conj() } else { out })
}

/// `L_N(z)` for a tridiagonal representative, via the determinant recurrence.
pub fn log_char_poly_tridiagonal(t: &Tridiagonal, z: Complex64) -> Result<Complex64> {
    let (zz, flip) = if z.im < 0.0 { (z.conj(), true) } else { (z, false) };
    let out = t.log_det_shift(zz)? - t.n() as f64 * log_potential_above(zz);
    Ok(if flip { out.conj() } else { out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharacteristicMode {
    ClosedForm,
    Ode,
}

struct Advection;

impl System<f64, Vector2<f64>> for Advection {
    fn system(&self, _t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let z = Complex64::new(y[0], y[1]);
        let v = m_sc_unchecked(z) + 0.5 * z;
        dy[0] = v.re;
        dy[1] = v.im;
    }
}

/// Characteristic `z_t` of `∂_t z = m(z) + z/2`.
pub fn characteristic(z: Complex64, t: f64, mode: CharacteristicMode) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::domain(
            "characteristic",
            format!("Im z = {} must be positive", z.im),
        ));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain("characteristic", format!("time {t} must be nonnegative")));
    }
    match mode {
        CharacteristicMode::ClosedForm => {
            if t == 0.0 {
                return Ok(z);
            }
            let s = sqrt_z2_minus_4(z);
            let (a, b) = ((0.5 * t).exp(), (-0.5 * t).exp());
            Ok(0.5 * (a * (z + s) + b * (z - s)))
        }
        CharacteristicMode::Ode => {
            if t == 0.0 {
                return Ok(z);
            }
            let mut solver = Dop853::new(Advection, 0.0, t, t, Vector2::new(z.re, z.im), 1e-13, 1e-13);
            solver.set_output(OutputType::Sparse);
            solver
                .integrate()
                .map_err(|e| Error::domain("characteristic", format!("ODE integration failed: {e:?}")))?;
            let y = solver.y_out().last().expect("solver output");
            Ok(Complex64::new(y[0], y[1]))
        }
    }
}

/// `Y_N(k) = π n √(β/log n) ρ(γ_k) (λ_k - γ_k)`.
pub fn normalized_fluct(spec: &Spectrum, k: usize, beta: u8) -> Result<f64> {
    let n = spec.n;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("index {k} outside 1..={n}")));
    }
    if k == n {
        return Err(Error::invalid("k = n sits at the edge where the density vanishes"));
    }
    normalized_fluct_value(spec.lambdas[k - 1], k, n, beta)
}

/// [`normalized_fluct`] for a single eigenvalue `λ_k`.
pub fn normalized_fluct_value(lambda: f64, k: usize, n: usize, beta: u8) -> Result<f64> {
    if n < 2 || k == 0 || k >= n {
        return Err(Error::invalid(format!("index {k} not admissible for n = {n}")));
    }
    let g = quantile(k, n)?;
    let nf = n as f64;
    Ok(PI * nf * (f64::from(beta) / nf.ln()).sqrt() * rho(g) * (lambda - g))
}

/// Eigenvalues of a dense sample.
pub fn eigenvalues(sample: &MatrixSample) -> Result<Spectrum> {
    sample.validate()?;
    let n = sample.n;
    let values = match &sample.entries {
        Entries::Real(a) => linalg::symmetric_eigenvalues(n, a),
        Entries::ComplexHermitian(a) => linalg::hermitian_eigenvalues(n, a),
    }
    .map_err(|msg| Error::Eigensolver {
        seed: sample.seed.seed,
        msg,
    })?;
    Spectrum::new(
        values,
        SpectrumSource {
            profile: sample.seed.profile.clone(),
            beta: sample.class().beta(),
            seed: Some(sample.seed.seed),
        },
    )
}

/// Spectrum of a tridiagonal representative.
pub fn tridiagonal_spectrum(t: &Tridiagonal, beta: u8, seed: Option<u64>) -> Result<Spectrum> {
    let profile = if beta == 1 { "goe" } else { "gue" };
    Spectrum::new(
        t.eigenvalues()?,
        SpectrumSource {
            profile: profile.into(),
            beta,
            seed,
        },
    )
}

/// `max_i |Σ_j |G_ij|² - Im G_ii / η|` for `G = (H - z)^{-1}`.
pub fn ward_residual(sample: &MatrixSample, z: Complex64) -> Result<f64> {
    if !(z.im > 0.0) {
        return Err(Error::domain("ward_residual", "Im z must be positive"));
    }
    let g = resolvent(sample, z)?;
    let n = sample.n;
    let mut worst = 0.0f64;
    for i in 0..n {
        let row: f64 = g[i * n..(i + 1) * n].iter().map(|x| x.norm_sqr()).sum();
        worst = worst.max((row - g[i * n + i].im / z.im).abs());
    }
    Ok(worst)
}

/// Dense resolvent `(H - z)^{-1}`, row-major.
pub fn resolvent(sample: &MatrixSample, z: Complex64) -> Result<Vec<Complex64>> {
    let n = sample.n;
    let mut a = sample.to_complex();
    for i in 0..n {
        a[i * n + i] -= z;
    }
    linalg::inverse("resolvent", n, &a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{make_profile, sample_matrix, EntryLaw, ProfileKind, SeedRecord, SymmetryClass};
    use proptest::prelude::*;

    fn src() -> SpectrumSource {
        SpectrumSource {
            profile: "test".into(),
            beta: 1,
            seed: None,
        }
    }

    fn diag(values: &[f64]) -> MatrixSample {
        let n = values.len();
        let mut a = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            a[i * n + i] = *v;
        }
        MatrixSample {
            n,
            entries: Entries::Real(a),
            seed: SeedRecord {
                seed: 0,
                profile: "custom".into(),
                law: "none".into(),
                history: vec![],
            },
        }
    }

    #[test]
    fn semicircle_values() {
        assert!((rho(0.0) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(rho(2.0), 0.0);
        assert_eq!(rho(-2.0), 0.0);
        let m = m_sc(Complex64::new(0.0, 1.0)).unwrap();
        assert!((m - Complex64::new(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-15);
        assert!(m_sc(Complex64::new(0.5, 0.0)).is_err());
        assert!((m_sc(Complex64::new(3.0, 0.0)).unwrap().re - (-3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn scale_examples() {
        assert_eq!(scale_params(1.5, 10).kappa, 0.5);
        assert!((scale_params(0.0, 100).ell - 0.01 / 2f64.sqrt()).abs() < 1e-15);
        assert!((scale_params(2.0, 1000).ell - 0.01).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(50, 100).unwrap(), 0.0);
        assert_eq!(quantile(100, 100).unwrap(), 2.0);
        assert!(quantile(0, 10).is_err() && quantile(11, 10).is_err());
        for k in 1..=1000 {
            let g = quantile(k, 1000).unwrap();
            assert!((semicircle_cdf(g) - k as f64 / 1000.0).abs() <= 1e-10, "k={k}");
        }
    }

    #[test]
    fn potential_identities() {
        assert!((log_potential(Complex64::new(2.0, 0.0)).unwrap() - 0.5).norm() < 1e-14);
        let big = Complex64::new(1e6, 0.0);
        assert!((log_potential(big).unwrap() - big.ln()).norm() < 1e-6);
        let z = Complex64::new(1.0, 1.0);
        let h = 1e-5;
        let d = (log_potential(z + h).unwrap() - log_potential(z - h).unwrap()) / (2.0 * h);
        assert!((d + m_sc(z).unwrap()).norm() < 1e-7);
        assert!(log_potential(Complex64::new(-2.0, 0.0)).is_err());
        assert!(log_potential(Complex64::new(-3.0, 0.0)).is_err());
    }

    #[test]
    fn potential_matches_quadrature_at_two() {
        // x = 2cosθ: log(2 - x) = log(4 sin²(θ/2)), ρ(x)dx = (2/π) sin²θ dθ
        let v = crate::quad::adaptive(
            |t: f64| (4.0 * (0.5 * t).sin().powi(2)).ln() * 2.0 / PI * t.sin().powi(2),
            0.0,
            PI,
            1e-12,
        )
        .unwrap();
        assert!((v - 0.5).abs() < 1e-8, "{v}");
    }

    #[test]
    fn stieltjes_examples() {
        let s = Spectrum::new(vec![0.0], src()).unwrap();
        assert!((stieltjes(&s, Complex64::new(0.0, 1.0)).unwrap() - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(stieltjes(&s, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn counting_on_real_axis() {
        let s = Spectrum::new(vec![-1.5, -0.2, 0.4, 1.1], src()).unwrap();
        for (e, above) in [(-2.5, 4.0), (-1.0, 3.0), (0.0, 2.0), (0.5, 1.0), (1.5, 0.0)] {
            let l = log_char_poly(&s, Complex64::new(e, 0.0)).unwrap();
            let sum_im = l.im + 4.0 * log_potential_above(Complex64::new(e, 0.0)).im;
            assert!((sum_im / PI - above).abs() < 1e-12, "E={e}");
        }
        let l = log_char_poly(&s, Complex64::new(2.5, 0.0)).unwrap();
        assert_eq!(l.im, 0.0);
        assert!(log_char_poly(&s, Complex64::new(0.4, 0.0)).is_err());
    }

    #[test]
    fn quantile_spectrum_has_small_log_char_poly() {
        for n in [100, 1000] {
            let s = Spectrum::new(quantiles(n), src()).unwrap();
            let l = log_char_poly(&s, Complex64::new(0.0, 1.0)).unwrap();
            assert!(l.norm() <= 2.0, "n={n}: {l}");
        }
    }

    #[test]
    fn characteristic_identities() {
        let z = Complex64::new(0.5, 0.1);
        assert_eq!(characteristic(z, 0.0, CharacteristicMode::ClosedForm).unwrap(), z);
        let h = 1e-6;
        let d = (characteristic(z, h, CharacteristicMode::ClosedForm).unwrap()
            - characteristic(z, 0.0, CharacteristicMode::ClosedForm).unwrap())
            / h;
        let want = m_sc(z).unwrap() + 0.5 * z;
        assert!((d - want).norm() < 1e-6, "{d} {want}");
        assert!((sqrt_z2_minus_4(z) / 2.0 - want).norm() < 1e-14);

        let z = Complex64::new(1.9, 0.01);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let a = characteristic(z, t, CharacteristicMode::ClosedForm).unwrap();
            let b = characteristic(z, t, CharacteristicMode::Ode).unwrap();
            assert!((a - b).norm() <= 1e-8, "t={t}: {a} {b}");
        }
        assert!(characteristic(Complex64::new(0.0, 0.0), 0.1, CharacteristicMode::ClosedForm).is_err());
    }

    #[test]
    fn normalized_fluct_examples() {
        let mut l = quantiles(100);
        let s = Spectrum::new(l.clone(), src()).unwrap();
        assert_eq!(normalized_fluct(&s, 50, 1).unwrap(), 0.0);
        l[49] += 1e-3;
        let s = Spectrum::new(l, src()).unwrap();
        let y = normalized_fluct(&s, 50, 1).unwrap();
        assert!((y - 0.1 / 100f64.ln().sqrt()).abs() < 1e-12, "{y}");
        assert!(normalized_fluct(&s, 100, 1).is_err());
    }

    #[test]
    fn eigenvalue_examples() {
        let s = eigenvalues(&diag(&[3.0, -1.0, 2.0])).unwrap();
        assert_eq!(s.lambdas, vec![-1.0, 2.0, 3.0]);
        assert_eq!(eigenvalues(&diag(&[0.7])).unwrap().lambdas, vec![0.7]);
    }

    #[test]
    fn ward_examples() {
        let z = Complex64::new(0.0, 1.0);
        let g = resolvent(&diag(&[1.0, -1.0]), z).unwrap();
        let row: f64 = g[0].norm_sqr() + g[1].norm_sqr();
        assert!((row - 0.5).abs() < 1e-15 && (g[0].im - 0.5).abs() < 1e-15);
        assert!(ward_residual(&diag(&[1.0, 1.0, 1.0]), Complex64::new(0.0, 2.0)).unwrap() <= 1e-12);
        let p = make_profile(ProfileKind::Goe, 64).unwrap();
        let h = sample_matrix(&p, EntryLaw::Gaussian, SymmetryClass::Real, 11);
        assert!(ward_residual(&h, Complex64::new(0.3, 0.05)).unwrap() <= 1e-9);
    }

    #[test]
    fn spectrum_csv_round_trip() {
        let s = Spectrum::new(vec![-0.25, 1.0 / 3.0, 1.5], src()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Spectrum::read_csv(buf.as_slice(), src()).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn m_sc_solves_its_equation(e in -5.0f64..5.0, eta in 1e-6f64..5.0) {
            let z = Complex64::new(e, eta);
            let m = m_sc(z).unwrap();
            prop_assert!((m * m + z * m + 1.0).norm() <= 1e-12);
            prop_assert!(m.im > 0.0);
        }

        #[test]
        fn log_char_poly_conjugation(seed: u64, e in -3.0f64..3.0, eta in 1e-3f64..2.0) {
            let p = make_profile(ProfileKind::Goe, 12).unwrap();
            let s = eigenvalues(&sample_matrix(&p, EntryLaw::Gaussian, SymmetryClass::Real, seed)).unwrap();
            let z = Complex64::new(e, eta);
            let a = log_char_poly(&s, z).unwrap();
            let b = log_char_poly(&s, z.conj()).unwrap();
            prop_assert!((a.conj() - b).norm() < 1e-12);
            let st = stieltjes(&s, z).unwrap();
            prop_assert!((st.conj() - stieltjes(&s, z.conj()).unwrap()).norm() < 1e-14);
        }

        #[test]
        fn counting_drops_by_one_per_eigenvalue(seed: u64) {
            let p = make_profile(ProfileKind::Goe, 10).unwrap();
            let s = eigenvalues(&sample_matrix(&p, EntryLaw::Gaussian, SymmetryClass::Real, seed)).unwrap();
            let count = |e: f64| {
                let z = Complex64::new(e, 0.0);
                (log_char_poly(&s, z).unwrap().im + 10.0 * log_potential_above(z).im) / PI
            };
            for w in s.lambdas.windows(2) {
                let left = count(w[0] - 1e-9);
                let right = count(w[0] + 1e-9);
                prop_assert!((left - right - 1.0).abs() < 1e-9);
                let _ = w[1];
            }
        }

        #[test]
        fn trace_invariance(seed: u64) {
            let p = make_profile(ProfileKind::Goe, 16).unwrap();
            let h = sample_matrix(&p, EntryLaw::Gaussian, SymmetryClass::Real, seed);
            let s = eigenvalues(&h).unwrap();
            prop_assert!((s.lambdas.iter().sum::<f64>() - h.trace()).abs() <= 1e-8 * 16.0);
        }

        #[test]
        fn characteristic_semigroup(e in -1.9f64..1.9, eta in 0.01f64..1.0, t in 0.0f64..0.5, s in 0.0f64..0.5) {
            let z = Complex64::new(e, eta);
            let a = characteristic(z, t + s, CharacteristicMode::ClosedForm).unwrap();
            let zt = characteristic(z, t, CharacteristicMode::ClosedForm).unwrap();
            let b = characteristic(zt, s, CharacteristicMode::ClosedForm).unwrap();
            prop_assert!((a - b).norm() < 1e-8);
        }
    }
}
