use std::cell::OnceCell;
use std::collections::BTreeMap;

use num_complex::Complex64;

use super::config::{EnergySpec, ExperimentConfig, ExperimentKind, IndexSpec, Regime, TestFunctionSpec};
use super::{Group, Replica, Runner};
use crate::clt::{self, ContourMesh, LogPart, TestFunction};
use crate::dbm::{self, DtPolicy, StorePolicy};
use crate::ensemble::{self, EntryLaw, MatrixSample, ProfileKind, SymmetryClass, VarianceProfile};
use crate::spectral::{self, CharacteristicMode, Spectrum};
use crate::stats;
use crate::tridiag::Tridiagonal;
use crate::{qve, rng, Error, Result};

pub(crate) fn build(cfg: &ExperimentConfig) -> Result<Box<dyn Runner>> {
    let model = Model::new(cfg)?;
    Ok(match cfg.experiment {
        ExperimentKind::LogfieldClt => Box::new(LogfieldClt::new(cfg, model)),
        ExperimentKind::EigenvalueClt => Box::new(EigenvalueClt {
            indices: cfg.indices_or_default(),
            model,
        }),
        ExperimentKind::Wegner => Box::new(Wegner {
            energies: cfg.energies_or_default(),
            deltas: cfg.deltas_or_default(),
            model,
        }),
        ExperimentKind::LocalLaw => Box::new(LocalLaw::new(cfg, model)?),
        ExperimentKind::Coupling => Box::new(Coupling {
            t: cfg.t_or_default(),
            model,
        }),
        ExperimentKind::Advection => Box::new(Advection {
            t: cfg.t_or_default(),
            model,
        }),
        ExperimentKind::Smoothing => Box::new(Smoothing {
            energies: cfg.energies_or_default(),
            model,
        }),
        ExperimentKind::VarianceMatch => Box::new(VarianceMatch::new(cfg, model)?),
    })
}

/// `goe`, `gue`, `uniform`, `circulant:<b>` or `two_block:<within>:<between>`.
pub fn build_profile(label: &str, n: usize) -> Result<VarianceProfile> {
    if let Some(rest) = label.strip_prefix("two_block:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let nums: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
        if parts.len() != 2 || nums.len() != 2 {
            return Err(Error::Config(format!("bad two-block profile '{label}'")));
        }
        return VarianceProfile::two_block(n, nums[0], nums[1]);
    }
    ensemble::make_profile(ProfileKind::parse(label)?, n)
}

struct Model {
    label: String,
    law: EntryLaw,
    beta: u8,
    tridiagonal: bool,
    profiles: BTreeMap<usize, VarianceProfile>,
}

impl Model {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let label = cfg.profile_label();
        let law = cfg.entry_law()?;
        let gaussian_class = matches!((label.as_str(), cfg.beta), ("goe", 1) | ("gue", 2));
        let tridiagonal = gaussian_class && law == EntryLaw::Gaussian;
        let mut profiles = BTreeMap::new();
        for &n in &cfg.n {
            profiles.insert(n, build_profile(&label, n)?);
        }
        Ok(Model {
            label,
            law,
            beta: cfg.beta,
            tridiagonal,
            profiles,
        })
    }

    fn profile(&self, n: usize) -> &VarianceProfile {
        &self.profiles[&n]
    }

    fn draw(&self, n: usize, seed: u64) -> Result<Draw> {
        if self.tridiagonal {
            return Ok(Draw::Tri(ensemble::sample_tridiagonal(n, self.beta, seed)?));
        }
        self.draw_dense(n, seed, self.law)
    }

    fn draw_dense(&self, n: usize, seed: u64, law: EntryLaw) -> Result<Draw> {
        let class = SymmetryClass::from_beta(self.beta)?;
        Ok(Draw::Dense {
            sample: ensemble::sample_matrix(self.profile(n), law, class, seed),
            spectrum: OnceCell::new(),
        })
    }

    /// GOE/GUE eigenvalues from the tridiagonal model.
    fn gaussian_eigenvalues(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        ensemble::sample_tridiagonal(n, self.beta, seed)?.eigenvalues()
    }

    /// Wigner eigenvalues from a dense sample of the configured law.
    fn wigner_eigenvalues(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.draw_dense(n, seed, self.law)?.eigenvalues()
    }

    fn m(&self, n: usize, z: Complex64) -> Result<Complex64> {
        let p = self.profile(n);
        if self.tridiagonal || p.exact_gw {
            spectral::m_sc(z)
        } else {
            Ok(qve::solve(p, z, 1e-12)?.mean())
        }
    }
}

enum Draw {
    Tri(Tridiagonal),
    Dense {
        sample: MatrixSample,
        spectrum: OnceCell<Spectrum>,
    },
}

impl Draw {
    fn spectrum(&self) -> Result<&Spectrum> {
        match self {
            Draw::Tri(_) => unreachable!("tridiagonal draws are used directly"),
            Draw::Dense { sample, spectrum } => {
                if let Some(s) = spectrum.get() {
                    return Ok(s);
                }
                let s = spectral::eigenvalues(sample)?;
                Ok(spectrum.get_or_init(|| s))
            }
        }
    }

    fn eigenvalues(&self) -> Result<Vec<f64>> {
        match self {
            Draw::Tri(t) => t.eigenvalues(),
            Draw::Dense { .. } => Ok(self.spectrum()?.lambdas.clone()),
        }
    }

    fn log_char_poly(&self, z: Complex64) -> Result<Complex64> {
        match self {
            Draw::Tri(t) => spectral::log_char_poly_tridiagonal(t, z),
            Draw::Dense { .. } => spectral::log_char_poly(self.spectrum()?, z),
        }
    }

    fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        match self {
            Draw::Tri(t) => t.stieltjes(z),
            Draw::Dense { .. } => spectral::stieltjes(self.spectrum()?, z),
        }
    }

    /// Eigenvalues in `[lo, hi)`.
    fn count_in(&self, lo: f64, hi: f64) -> Result<usize> {
        match self {
            Draw::Tri(t) => Ok(t.count_in(lo, hi)),
            Draw::Dense { .. } => {
                let l = &self.spectrum()?.lambdas;
                Ok(l.partition_point(|&x| x < hi) - l.partition_point(|&x| x < lo))
            }
        }
    }

    fn kth(&self, k: usize) -> Result<f64> {
        match self {
            Draw::Tri(t) => t.kth_eigenvalue(k),
            Draw::Dense { .. } => Ok(self.spectrum()?.lambdas[k - 1]),
        }
    }

    /// `Tr f(H)`; polynomials of degree ≤ 2 are read off the entries.
    fn trace_of(&self, f: &TestFunction, quadratic: Option<[f64; 3]>) -> Result<f64> {
        if let (Some(c), Draw::Dense { sample, .. }) = (quadratic, self) {
            let n = sample.n;
            let tr2 = stats::compensated_sum(
                (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| sample.entry(i, j).norm_sqr()),
            );
            return Ok(c[0] * n as f64 + c[1] * sample.trace() + c[2] * tr2);
        }
        let l = self.eigenvalues()?;
        Ok(stats::compensated_sum(l.iter().map(|&x| f.f(x))))
    }
}

fn eta_of(e: f64, n: usize) -> f64 {
    (n as f64).ln().powf(0.25).exp() * spectral::scale_params(e, n).ell
}

fn put(out: &mut BTreeMap<String, f64>, key: String, v: f64) {
    out.insert(key, v);
}

fn col(columns: &[String], name: &str) -> usize {
    columns.iter().position(|c| c == name).expect("known column")
}

struct LogfieldClt {
    energies: Vec<EnergySpec>,
    regime: Regime,
    ns: Vec<usize>,
    model: Model,
}

impl LogfieldClt {
    fn new(cfg: &ExperimentConfig, model: Model) -> Self {
        LogfieldClt {
            energies: cfg.energies_or_default(),
            regime: cfg.regime.unwrap_or_default(),
            ns: cfg.n.clone(),
            model,
        }
    }
}

impl Runner for LogfieldClt {
    fn columns(&self) -> Vec<String> {
        let mut c = Vec::new();
        for i in 0..self.energies.len() {
            c.extend([
                format!("re_raw_e{i}"),
                format!("im_raw_e{i}"),
                format!("re_e{i}"),
                format!("im_e{i}"),
            ]);
        }
        c
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let beta = self.model.beta;
        let d = self.model.draw(n, seed)?;
        let scale = (f64::from(beta) / (n as f64).ln()).sqrt();
        let mut v = Vec::new();
        for e in &self.energies {
            let e = e.at(n);
            let l = d.log_char_poly(Complex64::new(e, eta_of(e, n)))?;
            let delta = clt::delta_shift(e, n, beta)?;
            v.extend([l.re, l.im, scale * (l.re - delta), scale * l.im]);
        }
        Ok(Replica::Used(v))
    }

    fn derive(&self, groups: &[Group], columns: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        let beta = self.model.beta;
        let k = self.energies.len();
        for g in groups.iter().filter(|g| g.rows.len() > 1) {
            let n = g.n;
            let es: Vec<f64> = self.energies.iter().map(|e| e.at(n).clamp(-2.0, 2.0)).collect();
            let ce = clt::covariance_exponents(&es, n, beta, None)?;
            let re: Vec<Vec<f64>> = (0..k).map(|i| g.column(col(columns, &format!("re_e{i}")))).collect();
            let im: Vec<Vec<f64>> = (0..k).map(|i| g.column(col(columns, &format!("im_e{i}")))).collect();
            for i in 0..k {
                let vr = stats::variance(&re[i]);
                let vi = stats::variance(&im[i]);
                put(out, format!("var_re_e{i}_n{n}"), vr);
                put(out, format!("var_im_e{i}_n{n}"), vi);
                put(out, format!("mean_re_e{i}_n{n}"), stats::mean(&re[i]));
                put(out, format!("pred_a_e{i}_n{n}"), ce.a[i][i]);
                put(out, format!("pred_b_e{i}_n{n}"), ce.b[i][i]);
                put(out, format!("var_ratio_re_e{i}_n{n}"), vr / ce.a[i][i]);
                put(out, format!("var_ratio_im_e{i}_n{n}"), vi / ce.b[i][i]);
                put(
                    out,
                    format!("ks_re_e{i}_n{n}"),
                    stats::ks_distance(&standardize(&re[i]))?,
                );
                for j in i + 1..k {
                    let c = stats::correlation(&re[i], &re[j]);
                    let p = ce.a[i][j] / (ce.a[i][i] * ce.a[j][j]).sqrt();
                    put(out, format!("corr_re_e{i}_e{j}_n{n}"), c);
                    put(out, format!("pred_corr_re_e{i}_e{j}_n{n}"), p);
                    put(out, format!("corr_err_re_e{i}_e{j}_n{n}"), c - p);
                    let ci = stats::correlation(&im[i], &im[j]);
                    let pi = ce.b[i][j] / (ce.b[i][i] * ce.b[j][j]).sqrt();
                    put(out, format!("corr_im_e{i}_e{j}_n{n}"), ci);
                    put(out, format!("corr_err_im_e{i}_e{j}_n{n}"), ci - pi);
                }
            }
        }
        let used: Vec<&Group> = groups.iter().filter(|g| g.rows.len() > 2).collect();
        if used.len() < 2 {
            return Ok(());
        }
        let x: Vec<f64> = used.iter().map(|g| (g.n as f64).ln()).collect();
        for i in 0..k {
            let raw: Vec<Vec<f64>> = used
                .iter()
                .map(|g| g.column(col(columns, &format!("re_raw_e{i}"))))
                .collect();
            let var: Vec<f64> = raw.iter().map(|c| stats::variance(c)).collect();
            let var_se: Vec<f64> = raw.iter().map(|c| stats::variance_standard_error(c)).collect();
            let mean: Vec<f64> = raw.iter().map(|c| stats::mean(c)).collect();
            let mean_se: Vec<f64> = raw
                .iter()
                .map(|c| (stats::variance(c) / c.len() as f64).sqrt())
                .collect();
            let mut pred_var = Vec::new();
            let mut pred_mean = Vec::new();
            for g in &used {
                let e = self.energies[i].at(g.n).clamp(-2.0, 2.0);
                let a = clt::covariance_exponents(&[e], g.n, beta, None)?.a[0][0];
                let ln = (g.n as f64).ln();
                pred_var.push((a * ln - ln.powf(0.25)) / f64::from(beta));
                pred_mean.push(clt::delta_shift(e, g.n, beta)?);
            }
            let fv = stats::linear_fit(&x, &var, Some(&var_se))?;
            let pv = stats::linear_fit(&x, &pred_var, None)?;
            let fm = stats::linear_fit(&x, &mean, Some(&mean_se))?;
            let pm = stats::linear_fit(&x, &pred_mean, None)?;
            put(out, format!("slope_var_re_e{i}"), fv.slope);
            put(out, format!("slope_var_re_se_e{i}"), fv.slope_se);
            put(out, format!("pred_slope_var_re_e{i}"), pv.slope);
            put(out, format!("slope_ratio_var_re_e{i}"), fv.slope / pv.slope);
            put(out, format!("slope_mean_re_e{i}"), fm.slope);
            put(out, format!("slope_mean_re_se_e{i}"), fm.slope_se);
            put(out, format!("pred_slope_mean_re_e{i}"), pm.slope);
            put(out, format!("slope_mean_err_re_e{i}"), fm.slope - pm.slope);
            if pm.slope.abs() > 1e-12 {
                put(out, format!("slope_ratio_mean_re_e{i}"), fm.slope / pm.slope);
            }
        }
        Ok(())
    }

    fn flags(&self) -> Vec<String> {
        let outside = self
            .ns
            .iter()
            .any(|&n| self.energies.iter().any(|e| !self.regime.contains(e.at(n), n)));
        if outside {
            vec!["beyond_proved_regime".into()]
        } else {
            Vec::new()
        }
    }
}

fn standardize(xs: &[f64]) -> Vec<f64> {
    let m = stats::mean(xs);
    let s = stats::variance(xs).sqrt();
    if s > 0.0 {
        xs.iter().map(|x| (x - m) / s).collect()
    } else {
        xs.to_vec()
    }
}

struct EigenvalueClt {
    indices: Vec<IndexSpec>,
    model: Model,
}

impl Runner for EigenvalueClt {
    fn columns(&self) -> Vec<String> {
        (0..self.indices.len()).map(|i| format!("y_k{i}")).collect()
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let d = self.model.draw(n, seed)?;
        let v = self
            .indices
            .iter()
            .map(|k| {
                let k = k.at(n);
                spectral::normalized_fluct_value(d.kth(k)?, k, n, self.model.beta)
            })
            .collect::<Result<_>>()?;
        Ok(Replica::Used(v))
    }

    fn derive(&self, groups: &[Group], _: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        for g in groups.iter().filter(|g| g.rows.len() > 1) {
            let n = g.n;
            let ks: Vec<usize> = self.indices.iter().map(|k| k.at(n)).collect();
            let ce = clt::covariance_exponents(&[], n, self.model.beta, Some(&ks))?;
            let c = ce.c.expect("indices supplied");
            for i in 0..ks.len() {
                let y = g.column(i);
                let v = stats::variance(&y);
                put(out, format!("var_y_k{i}_n{n}"), v);
                put(out, format!("mean_y_k{i}_n{n}"), stats::mean(&y));
                put(out, format!("ks_y_k{i}_n{n}"), stats::ks_distance(&standardize(&y))?);
                put(out, format!("pred_c_k{i}_n{n}"), c[i][i]);
                put(out, format!("var_ratio_y_k{i}_n{n}"), v / c[i][i]);
                for j in i + 1..ks.len() {
                    put(
                        out,
                        format!("corr_y_k{i}_k{j}_n{n}"),
                        stats::correlation(&y, &g.column(j)),
                    );
                    put(
                        out,
                        format!("pred_corr_y_k{i}_k{j}_n{n}"),
                        c[i][j] / (c[i][i] * c[j][j]).sqrt(),
                    );
                }
            }
        }
        Ok(())
    }
}

struct Wegner {
    energies: Vec<EnergySpec>,
    deltas: Vec<f64>,
    model: Model,
}

impl Runner for Wegner {
    fn columns(&self) -> Vec<String> {
        let mut c = Vec::new();
        for i in 0..self.energies.len() {
            for j in 0..self.deltas.len() {
                c.push(format!("hit_e{i}_d{j}"));
            }
        }
        c
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let d = self.model.draw(n, seed)?;
        let mut v = Vec::new();
        for e in &self.energies {
            let e = e.at(n);
            let ell = spectral::scale_params(e, n).ell;
            for &delta in &self.deltas {
                let hit = d.count_in(e - delta * ell, e + delta * ell)? > 0;
                v.push(if hit { 1.0 } else { 0.0 });
            }
        }
        Ok(Replica::Used(v))
    }

    fn derive(&self, groups: &[Group], _: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        let nd = self.deltas.len();
        let mut all_monotone = 1.0;
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = f64::NEG_INFINITY;
        for g in groups.iter().filter(|g| !g.rows.is_empty()) {
            let n = g.n;
            for i in 0..self.energies.len() {
                let p: Vec<f64> = (0..nd).map(|j| stats::mean(&g.column(i * nd + j))).collect();
                let mut monotone = 1.0;
                for j in 0..nd {
                    put(out, format!("prob_e{i}_d{j}_n{n}"), p[j]);
                    put(out, format!("density_e{i}_d{j}_n{n}"), p[j] / (2.0 * self.deltas[j]));
                    if j > 0 {
                        if !(p[j] < p[j - 1]) {
                            monotone = 0.0;
                        }
                        let r = if p[j - 1] > 0.0 { p[j] / p[j - 1] } else { f64::NAN };
                        put(out, format!("ratio_e{i}_d{j}_n{n}"), r);
                        min_ratio = min_ratio.min(r);
                        max_ratio = max_ratio.max(r);
                        if r.is_nan() {
                            min_ratio = f64::NAN;
                        }
                    }
                }
                put(out, format!("monotone_e{i}_n{n}"), monotone);
                if monotone == 0.0 {
                    all_monotone = 0.0;
                }
            }
        }
        put(out, "all_monotone".into(), all_monotone);
        if nd > 1 {
            put(out, "min_ratio".into(), min_ratio);
            put(out, "max_ratio".into(), max_ratio);
        }
        Ok(())
    }
}

struct LocalLaw {
    energies: Vec<EnergySpec>,
    steps: Vec<u32>,
    /// `m(z)` per `(n, energy, step)`.
    m: BTreeMap<(usize, usize, usize), Complex64>,
    model: Model,
}

impl LocalLaw {
    fn new(cfg: &ExperimentConfig, model: Model) -> Result<Self> {
        let energies = cfg.energies_or_default();
        let steps = cfg.eta_steps_or_default();
        let mut m = BTreeMap::new();
        for &n in &cfg.n {
            for (i, e) in energies.iter().enumerate() {
                for (j, &s) in steps.iter().enumerate() {
                    let z = Complex64::new(e.at(n), 2f64.powi(s as i32) / n as f64);
                    m.insert((n, i, j), model.m(n, z)?);
                }
            }
        }
        Ok(LocalLaw {
            energies,
            steps,
            m,
            model,
        })
    }
}

impl Runner for LocalLaw {
    fn columns(&self) -> Vec<String> {
        let mut c = Vec::new();
        for i in 0..self.energies.len() {
            for s in &self.steps {
                c.push(format!("x_e{i}_j{s}"));
            }
        }
        c
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let d = self.model.draw(n, seed)?;
        let mut v = Vec::new();
        for (i, e) in self.energies.iter().enumerate() {
            for (j, &s) in self.steps.iter().enumerate() {
                let eta = 2f64.powi(s as i32) / n as f64;
                let z = Complex64::new(e.at(n), eta);
                let diff = d.stieltjes(z)? - self.m[&(n, i, j)];
                v.push((n as f64 * eta).powi(2) * diff.norm_sqr());
            }
        }
        Ok(Replica::Used(v))
    }

    fn derive(&self, groups: &[Group], _: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        let ncol = self.energies.len() * self.steps.len();
        let mut p1 = Vec::new();
        let mut p2 = Vec::new();
        for g in groups {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for c in 0..ncol {
                let x = g.column(c);
                let (i, j) = (c / self.steps.len(), self.steps[c % self.steps.len()]);
                let m1 = stats::mean(&x);
                let m2 = stats::mean(&x.iter().map(|v| v * v).collect::<Vec<_>>());
                put(out, format!("p1_e{i}_j{j}_n{}", g.n), m1);
                put(out, format!("p2_e{i}_j{j}_n{}", g.n), m2);
                a.push(m1);
                b.push(m2);
            }
            p1.push(a);
            p2.push(b);
        }
        let mut max1 = f64::NEG_INFINITY;
        let mut max2 = f64::NEG_INFINITY;
        for w in 1..groups.len() {
            let n = groups[w].n;
            for c in 0..ncol {
                let (i, j) = (c / self.steps.len(), self.steps[c % self.steps.len()]);
                let r1 = p1[w][c] / p1[w - 1][c];
                let r2 = p2[w][c] / p2[w - 1][c];
                put(out, format!("ratio_p1_e{i}_j{j}_n{n}"), r1);
                put(out, format!("ratio_p2_e{i}_j{j}_n{n}"), r2);
                max1 = max1.max(r1);
                max2 = max2.max(r2);
            }
        }
        if groups.len() > 1 {
            put(out, "max_ratio_p1".into(), max1);
            put(out, "max_ratio_p2".into(), max2);
        }
        let mut worst = f64::NEG_INFINITY;
        for a in &p1 {
            worst = worst.max(a.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        put(out, "max_p1".into(), worst);
        Ok(())
    }
}

fn final_only() -> DtPolicy {
    DtPolicy {
        store: StorePolicy::FinalOnly,
        ..DtPolicy::default()
    }
}

/// Coupled Wigner (configured law, dense) and GOE/GUE (tridiagonal) initial data.
fn coupled_initials(model: &Model, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let wigner = model.wigner_eigenvalues(n, rng::derive(seed, "wigner", &[]))?;
    let gauss = model.gaussian_eigenvalues(n, rng::derive(seed, "gaussian", &[]))?;
    Ok((wigner, gauss))
}

struct Coupling {
    t: f64,
    model: Model,
}

impl Runner for Coupling {
    fn columns(&self) -> Vec<String> {
        vec!["stat".into(), "stat_bulk".into(), "initial".into()]
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let (a0, b0) = coupled_initials(&self.model, n, seed)?;
        let (a, b) = dbm::run_coupled(
            &a0,
            &b0,
            self.model.beta,
            self.t,
            &final_only(),
            rng::derive(seed, "dbm", &[]),
        )?;
        let (a, b) = (
            a.particles.last().expect("final state"),
            b.particles.last().expect("final state"),
        );
        let nf = n as f64;
        let gap = |k: usize| (a[k] - b[k]).abs();
        let stat = nf * self.t * (0..n).map(gap).fold(0.0, f64::max);
        let lo = n / 10;
        let bulk = nf * self.t * (lo..n - lo).map(gap).fold(0.0, f64::max);
        let initial = nf * (0..n).map(|k| (a0[k] - b0[k]).abs()).fold(0.0, f64::max);
        Ok(Replica::Used(vec![stat, bulk, initial]))
    }

    fn derive(&self, groups: &[Group], _: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        for g in groups.iter().filter(|g| !g.rows.is_empty()) {
            let n = g.n;
            let bound = (n as f64).powf(0.2);
            let s = g.column(0);
            let within = s.iter().filter(|&&x| x <= bound).count() as f64 / s.len() as f64;
            put(out, format!("bound_n{n}"), bound);
            put(out, format!("frac_within_bound_n{n}"), within);
            put(out, format!("median_stat_n{n}"), stats::median(&s));
            put(out, format!("median_stat_bulk_n{n}"), stats::median(&g.column(1)));
        }
        let worst = groups
            .iter()
            .filter(|g| !g.rows.is_empty())
            .map(|g| {
                let b = (g.n as f64).powf(0.2);
                let s = g.column(0);
                s.iter().filter(|&&x| x <= b).count() as f64 / s.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        put(out, "frac_within_bound".into(), worst);
        Ok(())
    }
}

/// Points of the `S(φ)` grid: 32 quantile-spaced energies at height `φ²ℓ(E)`.
pub(crate) fn advection_grid(n: usize) -> Result<Vec<Complex64>> {
    let nf = n as f64;
    let phi = nf.ln().ln().powi(2).exp().min(nf.powf(0.1));
    (0..32)
        .map(|j| {
            let k = (((j as f64 + 0.5) * nf / 32.0).round() as usize).clamp(1, n);
            let e = spectral::quantile(k, n)?;
            Ok(Complex64::new(e, phi * phi * spectral::scale_params(e, n).ell))
        })
        .collect()
}

struct Advection {
    t: f64,
    model: Model,
}

impl Runner for Advection {
    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = (0..32).map(|j| format!("res_{j}")).collect();
        c.push("median".into());
        c
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let (lambda, mu) = coupled_initials(&self.model, n, seed)?;
        let u0: Vec<f64> = mu.iter().zip(&lambda).map(|(m, l)| m - l).collect();
        let (path, kernel) = dbm::run_with_kernel(
            &lambda,
            &u0,
            self.model.beta,
            self.t,
            &final_only(),
            rng::derive(seed, "dbm", &[]),
        )?;
        let mut v = Vec::with_capacity(33);
        for z in advection_grid(n)? {
            let zt = spectral::characteristic(z, self.t, CharacteristicMode::ClosedForm)?;
            let ft = dbm::observable_f(&path, &kernel, z, self.t)?;
            let f0 = dbm::observable_f(&path, &kernel, zt, 0.0)?;
            v.push((ft - f0).norm() / (1.0 + f0.norm()));
        }
        v.push(stats::median(&v));
        Ok(Replica::Used(v))
    }

    fn derive(&self, groups: &[Group], _: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        let mut all = Vec::new();
        for g in groups.iter().filter(|g| !g.rows.is_empty()) {
            let vals: Vec<f64> = g.rows.iter().flat_map(|(_, v)| v[..32].iter().copied()).collect();
            put(out, format!("median_residual_n{}", g.n), stats::median(&vals));
            put(
                out,
                format!("max_residual_n{}", g.n),
                vals.iter().copied().fold(0.0, f64::max),
            );
            all.extend(vals);
        }
        if !all.is_empty() {
            put(out, "median_residual".into(), stats::median(&all));
        }
        Ok(())
    }
}

struct Smoothing {
    energies: Vec<EnergySpec>,
    model: Model,
}

/// Real evaluation points closer than this to an eigenvalue discard the replica.
const WEGNER_GUARD: f64 = 1e-12;

impl Runner for Smoothing {
    fn columns(&self) -> Vec<String> {
        (0..self.energies.len()).map(|i| format!("stat_e{i}")).collect()
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let d = self.model.draw(n, seed)?;
        let scale = (n as f64).ln().sqrt();
        let mut v = Vec::new();
        for e in &self.energies {
            let e = e.at(n);
            if d.count_in(e - WEGNER_GUARD, e + WEGNER_GUARD)? > 0 {
                return Ok(Replica::Discarded);
            }
            let above = d.log_char_poly(Complex64::new(e, eta_of(e, n)))?;
            let real = match d.log_char_poly(Complex64::new(e, 0.0)) {
                Ok(l) => l,
                Err(Error::Domain { .. }) => return Ok(Replica::Discarded),
                Err(err) => return Err(err),
            };
            v.push((above - real).norm() / scale);
        }
        Ok(Replica::Used(v))
    }

    fn derive(&self, groups: &[Group], _: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        let mut worst = f64::NEG_INFINITY;
        for g in groups.iter().filter(|g| !g.rows.is_empty()) {
            for i in 0..self.energies.len() {
                let m = stats::median(&g.column(i));
                put(out, format!("median_stat_e{i}_n{}", g.n), m);
                worst = worst.max(m);
            }
        }
        if worst.is_finite() {
            put(out, "median_stat".into(), worst);
        }
        Ok(())
    }
}

struct Prepared {
    f: TestFunction,
    quadratic: Option<[f64; 3]>,
    pred: f64,
    pred_base: f64,
    band: f64,
    pred_alt: f64,
}

struct VarianceMatch {
    specs: Vec<TestFunctionSpec>,
    lambdas: Vec<f64>,
    alt: Option<EntryLaw>,
    prepared: BTreeMap<usize, Vec<Prepared>>,
    notes: Vec<String>,
    model: Model,
}

fn make_function(spec: &TestFunctionSpec, n: usize) -> Result<TestFunction> {
    match spec {
        TestFunctionSpec::Polynomial { coeffs } => TestFunction::polynomial(coeffs),
        TestFunctionSpec::Mesoscopic { e, scale_exponent } => {
            TestFunction::mesoscopic(*e, (n as f64).powf(-scale_exponent))
        }
        TestFunctionSpec::LogRe { e, gamma } => clt::log_test_function(*e, *gamma, n, LogPart::Re),
        TestFunctionSpec::LogIm { e, gamma } => clt::log_test_function(*e, *gamma, n, LogPart::Im),
    }
}

/// `(estimate, base, band half-width)` of `Var Tr f` for one law.
fn predict(f: &TestFunction, p: &VarianceProfile, law: EntryLaw, beta: u8) -> Result<(f64, f64, f64)> {
    let n = p.n as f64;
    let gw = (0..p.n).all(|i| (p.row_sum(i) - 1.0).abs() <= 2.0 / n + 1e-12);
    if gw {
        let b = clt::variance_gw(f, p, law, beta)?;
        let half = 0.5 * (b.total_with_band.hi - b.total_with_band.lo);
        Ok((b.estimate(), b.base(), half))
    } else if beta == 2 {
        Err(Error::Config(
            "Wigner-type variance is implemented for real symmetric matrices only".into(),
        ))
    } else {
        let g = f.with_cutoff()?;
        let v = clt::variance_wigner_type(&g, p, law, &ContourMesh::default())?;
        Ok((v, v, 0.0))
    }
}

impl VarianceMatch {
    fn new(cfg: &ExperimentConfig, model: Model) -> Result<Self> {
        let specs = cfg.test_functions_or_default();
        let alt = match &cfg.compare_law {
            Some(l) => Some(EntryLaw::parse(l)?),
            None => None,
        };
        let mut prepared = BTreeMap::new();
        let mut notes = Vec::new();
        for &n in &cfg.n {
            let mut v = Vec::new();
            for (i, s) in specs.iter().enumerate() {
                let f = make_function(s, n)?;
                let quadratic = match s {
                    TestFunctionSpec::Polynomial { coeffs } if coeffs.len() <= 3 => {
                        let mut c = [0.0; 3];
                        c[..coeffs.len()].copy_from_slice(coeffs);
                        Some(c)
                    }
                    _ => None,
                };
                let p = model.profile(n);
                let mut run = |law: EntryLaw| match predict(&f, p, law, model.beta) {
                    Ok(x) => x,
                    Err(e) => {
                        notes.push(format!("prediction_unavailable_f{i}_n{n}: {e}"));
                        (f64::NAN, f64::NAN, f64::NAN)
                    }
                };
                let (pred, pred_base, band) = run(model.law);
                let pred_alt = alt.map(|l| run(l).0).unwrap_or(f64::NAN);
                v.push(Prepared {
                    f,
                    quadratic,
                    pred,
                    pred_base,
                    band,
                    pred_alt,
                });
            }
            prepared.insert(n, v);
        }
        Ok(VarianceMatch {
            specs,
            lambdas: cfg.lambdas_or_default(),
            alt,
            prepared,
            notes,
            model,
        })
    }
}

impl Runner for VarianceMatch {
    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = (0..self.specs.len()).map(|i| format!("tr_f{i}")).collect();
        if self.alt.is_some() {
            c.extend((0..self.specs.len()).map(|i| format!("tr_alt_f{i}")));
        }
        c
    }

    fn replica(&self, n: usize, seed: u64) -> Result<Replica> {
        let fs = &self.prepared[&n];
        let d = self.model.draw(n, seed)?;
        let mut v: Vec<f64> = fs
            .iter()
            .map(|p| d.trace_of(&p.f, p.quadratic))
            .collect::<Result<_>>()?;
        if let Some(law) = self.alt {
            let d = self.model.draw_dense(n, seed, law)?;
            for p in fs {
                v.push(d.trace_of(&p.f, p.quadratic)?);
            }
        }
        Ok(Replica::Used(v))
    }

    fn derive(&self, groups: &[Group], _: &[String], out: &mut BTreeMap<String, f64>) -> Result<()> {
        let k = self.specs.len();
        for g in groups.iter().filter(|g| g.rows.len() > 1) {
            let n = g.n;
            for (i, p) in self.prepared[&n].iter().enumerate() {
                let x = g.column(i);
                let v = stats::variance(&x);
                let se = stats::variance_standard_error(&x);
                put(out, format!("mc_var_f{i}_n{n}"), v);
                put(out, format!("mc_var_se_f{i}_n{n}"), se);
                put(out, format!("pred_var_f{i}_n{n}"), p.pred);
                put(out, format!("pred_base_f{i}_n{n}"), p.pred_base);
                put(out, format!("pred_band_f{i}_n{n}"), p.band);
                put(out, format!("z_var_f{i}_n{n}"), (v - p.pred) / se);
                if p.pred.is_finite() && p.pred >= 0.0 {
                    let m = stats::mean(&x);
                    let curve = clt::char_curve(p.pred, &self.lambdas)?;
                    let err = self
                        .lambdas
                        .iter()
                        .zip(&curve)
                        .map(|(l, c)| {
                            let emp = stats::compensated_sum(x.iter().map(|xi| (l * (xi - m)).cos())) / x.len() as f64;
                            (emp - c).abs()
                        })
                        .fold(0.0, f64::max);
                    put(out, format!("char_err_f{i}_n{n}"), err);
                }
                if self.alt.is_some() {
                    let y = g.column(k + i);
                    let va = stats::variance(&y);
                    let sa = stats::variance_standard_error(&y);
                    let shift = va - v;
                    let shift_se = (se * se + sa * sa).sqrt();
                    put(out, format!("mc_var_alt_f{i}_n{n}"), va);
                    put(out, format!("shift_f{i}_n{n}"), shift);
                    put(out, format!("shift_se_f{i}_n{n}"), shift_se);
                    put(out, format!("shift_z_f{i}_n{n}"), shift / shift_se);
                    put(out, format!("pred_shift_f{i}_n{n}"), p.pred_alt - p.pred);
                }
            }
        }
        Ok(())
    }

    fn flags(&self) -> Vec<String> {
        let mut f = self.notes.clone();
        let n_max = self.prepared.keys().copied().max().unwrap_or(0);
        if self.model.label != "goe" && self.model.label != "gue" && !self.model.profile(n_max).exact_gw {
            f.push("wigner_type_prediction".into());
        }
        f
    }
}
