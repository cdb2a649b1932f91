//! Dyson Brownian motion
//!
//! `dx_k = √(2/(βN)) dB_k + ((1/N) Σ_{l≠k} 1/(x_k - x_l) - x_k/2) dt`
//!
//! integrated by a semi-implicit Euler–Maruyama scheme with a gap-adapted
//! step, coupled flows driven by one noise record, and the tangent kernel
//! `du_k = (1/N) Σ_l (u_l - u_k)/(x_k - x_l)² dt`.
//!
//! One step from `x` with increment `ΔB`:
//!
//! ```text
//! y  = e^{-dt/2} (x + dt F_far(x)) + √(2/(βN)) ΔB
//! x' = y + dt F_nn(x')
//! ```
//!
//! where `F_nn` is the repulsion between nearest neighbours and `F_far` the
//! rest. The implicit part is a convex barrier problem, so `x'` is ordered.
//! The kernel uses the same splitting, which makes `e^{t/2} ∂_ν x` and `u`
//! agree step by step.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::spectral;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "times")]
pub enum StorePolicy {
    EveryStep,
    /// Store exactly at these times (steps are shortened to hit them).
    Times(Vec<f64>),
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtPolicy {
    /// `dt ≤ c · (min gap)² · N`.
    pub c: f64,
    pub dt_max: f64,
    /// Gaps below `gap_floor / N` are treated as `gap_floor / N` when
    /// sizing steps; closer encounters are left to the bridge retry.
    pub gap_floor: f64,
    /// Brownian-bridge halvings allowed when a step breaks the ordering.
    pub max_halvings: u32,
    pub store: StorePolicy,
    /// Keep every realised `(dt, ΔB)` in the path.
    pub record_noise: bool,
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy {
            c: 0.1,
            dt_max: 1e-3,
            gap_floor: 0.01,
            max_halvings: 20,
            store: StorePolicy::EveryStep,
            record_noise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStep {
    pub dt: f64,
    pub increments: Vec<f64>,
}

/// Brownian increments. `seed` regenerates them; `steps`, when present,
/// holds the realised substeps in order and is what [`replay`] consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub seed: u64,
    #[serde(default)]
    pub steps: Option<Vec<NoiseStep>>,
}

impl NoiseRecord {
    pub fn from_json(s: &str) -> Result<Self> {
        let r: NoiseRecord = serde_json::from_str(s)?;
        if let Some(steps) = &r.steps {
            let n = steps.first().map(|s| s.increments.len()).unwrap_or(0);
            for (i, st) in steps.iter().enumerate() {
                if !(st.dt > 0.0) || !st.dt.is_finite() {
                    return Err(Error::invalid(format!("noise step {i} has invalid dt {}", st.dt)));
                }
                if st.increments.len() != n || st.increments.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("noise step {i} has malformed increments")));
                }
            }
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbmPath {
    pub beta: u8,
    pub n: usize,
    pub times: Vec<f64>,
    pub particles: Vec<Vec<f64>>,
    pub noise: NoiseRecord,
    pub policy: DtPolicy,
    /// Accepted substeps, including those produced by bridge splitting.
    pub steps: usize,
    pub splits: usize,
}

impl DbmPath {
    pub fn final_positions(&self) -> &[f64] {
        self.particles.last().expect("path has at least one stored state")
    }

    pub fn index_of_time(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| Error::invalid(format!("time {t} is not on the stored grid")))
    }

    /// CSV time series `(time, k, x_k)`, `k` 1-based.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time", "k", "x"])?;
        for (t, xs) in self.times.iter().zip(&self.particles) {
            for (k, x) in xs.iter().enumerate() {
                wr.write_record([format!("{t:e}"), (k + 1).to_string(), format!("{x:e}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn check_beta(beta: u8) -> Result<()> {
    if beta == 1 || beta == 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("beta must be 1 or 2, got {beta}")))
    }
}

/// Sorted copy with ties separated by 1e-12.
fn prepare(initial: &[f64]) -> Result<Vec<f64>> {
    if initial.is_empty() || initial.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("initial configuration must be non-empty and finite"));
    }
    let mut x = initial.to_vec();
    x.sort_by(f64::total_cmp);
    for k in 1..x.len() {
        if x[k] <= x[k - 1] {
            x[k] = x[k - 1] + 1e-12;
        }
    }
    Ok(x)
}

fn min_gap(x: &[f64]) -> f64 {
    x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Explicit part of the drift: repulsion from all but the nearest
/// neighbours.
fn far_drift(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    out.iter_mut().for_each(|o| *o = 0.0);
    for k in 0..n.saturating_sub(2) {
        let xk = x[k];
        let (head, tail) = out.split_at_mut(k + 2);
        let mut s = 0.0;
        for (o, &xl) in tail.iter_mut().zip(&x[k + 2..]) {
            let r = 1.0 / (xk - xl);
            s += r;
            *o -= r;
        }
        head[k] += s;
    }
    out.iter_mut().for_each(|o| *o *= inv_n);
}

/// Solve the symmetric tridiagonal system with diagonal `d` and
/// off-diagonal `e` (`e[k]` couples `k` and `k+1`), overwriting `rhs`.
fn thomas(d: &[f64], e: &[f64], rhs: &mut [f64], work: &mut Vec<f64>) {
    let n = d.len();
    work.clear();
    work.resize(n, 0.0);
    let mut piv = d[0];
    rhs[0] /= piv;
    for k in 1..n {
        work[k - 1] = e[k - 1] / piv;
        piv = d[k] - e[k - 1] * work[k - 1];
        rhs[k] = (rhs[k] - e[k - 1] * rhs[k - 1]) / piv;
    }
    for k in (0..n.saturating_sub(1)).rev() {
        rhs[k] -= work[k] * rhs[k + 1];
    }
}

fn ordered(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] < w[1]) && x.iter().all(|v| v.is_finite())
}

/// Nearest-neighbour repulsion taken implicitly: `x` minimises
/// `Σ (x_k - y_k)²/(2dt) - (1/N) Σ log(x_{k+1} - x_k)`, which is strictly
/// convex on ordered vectors. Newton with a feasibility-preserving
/// backtracking line search, started from `start`.
fn nearest_implicit(y: &[f64], start: &[f64], dt: f64) -> Option<Vec<f64>> {
    let n = y.len();
    if n == 1 {
        return Some(y.to_vec());
    }
    let inv_n = 1.0 / n as f64;
    let objective = |x: &[f64]| -> f64 {
        let quad: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * dt);
        let bar: f64 = x.windows(2).map(|w| (w[1] - w[0]).ln()).sum();
        quad - inv_n * bar
    };
    let mut x = start.to_vec();
    let mut phi = f64::NAN;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n - 1];
    let mut g = vec![0.0; n];
    let mut work = Vec::new();
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for _ in 0..100 {
        for k in 0..n {
            g[k] = (x[k] - y[k]) / dt;
            d[k] = 1.0 / dt;
        }
        for k in 0..n - 1 {
            let gap = x[k + 1] - x[k];
            let inv = inv_n / gap;
            g[k] += inv;
            g[k + 1] -= inv;
            let h = inv / gap;
            d[k] += h;
            d[k + 1] += h;
            e[k] = -h;
        }
        let mut step: Vec<f64> = g.iter().map(|v| -v).collect();
        thomas(&d, &e, &mut step, &mut work);
        let decrement: f64 = -step.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        if !decrement.is_finite() {
            return None;
        }
        let size = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if size <= 1e-12 * scale {
            let polished: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            return if ordered(&polished) {
                Some(polished)
            } else {
                ordered(&x).then_some(x)
            };
        }
        let local = step
            .windows(2)
            .zip(x.windows(2))
            .all(|(s, w)| (s[1] - s[0]).abs() <= 0.1 * (w[1] - w[0]));
        if local {
            x.iter_mut().zip(&step).for_each(|(a, b)| *a += b);
            phi = f64::NAN;
            continue;
        }
        if phi.is_nan() {
            phi = objective(&x);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            if ordered(&trial) {
                let p = objective(&trial);
                if p <= phi - 1e-4 * alpha * decrement {
                    x = trial;
                    phi = p;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return ordered(&x).then_some(x);
        }
    }
    ordered(&x).then_some(x)
}

/// Advance every system by one substep; `None` when an ordered update
/// cannot be produced.
fn try_step(systems: &[Vec<f64>], dt: f64, inc: &[f64], sigma: f64, buf: &mut [f64]) -> Option<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(systems.len());
    for x in systems {
        far_drift(x, buf);
        let decay = (-0.5 * dt).exp();
        let y: Vec<f64> = x
            .iter()
            .zip(buf.iter())
            .zip(inc)
            .map(|((xk, dk), bk)| decay * (xk + dk * dt) + sigma * bk)
            .collect();
        let mut guess = y.clone();
        let inv_n = 1.0 / x.len() as f64;
        for k in 0..x.len().saturating_sub(1) {
            let push = dt * inv_n / (y[k + 1] - y[k]);
            guess[k] -= push;
            guess[k + 1] += push;
        }
        let start = if ordered(&guess) && ordered(&y) {
            &guess
        } else if ordered(&y) {
            &y
        } else {
            x
        };
        out.push(nearest_implicit(&y, start, dt)?);
    }
    Some(out)
}

struct Integrator<'a> {
    beta: u8,
    policy: &'a DtPolicy,
    seed: u64,
    systems: Vec<Vec<f64>>,
    t: f64,
    steps: usize,
    splits: usize,
    record: Option<Vec<NoiseStep>>,
    times: Vec<f64>,
    stored: Vec<Vec<Vec<f64>>>,
    buf: Vec<f64>,
}

impl DtPolicy {
    /// Largest step allowed at minimum gap `gap` with `n` particles.
    pub fn gap_step(&self, gap: f64, n: usize) -> f64 {
        let nf = n as f64;
        let g = gap.max(self.gap_floor / nf);
        if g.is_finite() {
            self.c * g * g * nf
        } else {
            f64::INFINITY
        }
    }
}

impl Integrator<'_> {
    fn sigma(&self) -> f64 {
        (2.0 / (f64::from(self.beta) * self.systems[0].len() as f64)).sqrt()
    }

    fn store(&mut self) {
        self.times.push(self.t);
        self.stored.push(self.systems.clone());
    }

    fn commit<K: FnMut(&[f64], &[f64], f64) -> Result<()>>(
        &mut self,
        next: Vec<Vec<f64>>,
        dt: f64,
        inc: &[f64],
        kernel: &mut K,
    ) -> Result<()> {
        kernel(&self.systems[0], &next[0], dt)?;
        self.systems = next;
        self.t += dt;
        self.steps += 1;
        if let Some(r) = &mut self.record {
            r.push(NoiseStep {
                dt,
                increments: inc.to_vec(),
            });
        }
        if self.policy.store == StorePolicy::EveryStep {
            self.store();
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn substep<K: FnMut(&[f64], &[f64], f64) -> Result<()>>(
        &mut self,
        step: usize,
        dt: f64,
        inc: Vec<f64>,
        depth: u32,
        id: u64,
        kernel: &mut K,
    ) -> Result<()> {
        let sigma = self.sigma();
        let gap = self.systems.iter().map(|x| min_gap(x)).fold(f64::INFINITY, f64::min);
        if dt <= self.policy.gap_step(gap, self.systems[0].len()) || depth >= self.policy.max_halvings {
            let mut buf = std::mem::take(&mut self.buf);
            let attempt = try_step(&self.systems, dt, &inc, sigma, &mut buf);
            self.buf = buf;
            if let Some(next) = attempt {
                return self.commit(next, dt, &inc, kernel);
            }
        }
        if depth >= self.policy.max_halvings {
            return Err(Error::Collision {
                step,
                time: self.t,
                halvings: depth,
            });
        }
        self.splits += 1;
        let mut r = rng::stream(self.seed, "dbm-bridge", &[step as u64, u64::from(depth), id]);
        let half = 0.5 * dt.sqrt();
        let first: Vec<f64> = inc
            .iter()
            .map(|b| 0.5 * b + half * r.sample::<f64, _>(StandardNormal))
            .collect();
        let second: Vec<f64> = inc.iter().zip(&first).map(|(b, f)| b - f).collect();
        self.substep(step, 0.5 * dt, first, depth + 1, 2 * id, kernel)?;
        self.substep(step, 0.5 * dt, second, depth + 1, 2 * id + 1, kernel)
    }

    fn run<K: FnMut(&[f64], &[f64], f64) -> Result<()>>(&mut self, t_end: f64, kernel: &mut K) -> Result<()> {
        let n = self.systems[0].len();
        let mut targets: Vec<f64> = match &self.policy.store {
            StorePolicy::Times(ts) => ts.iter().copied().filter(|&s| s > 0.0 && s < t_end).collect(),
            _ => Vec::new(),
        };
        targets.sort_by(f64::total_cmp);
        targets.dedup();
        targets.push(t_end);
        let mut next_target = 0;
        self.store();
        let mut step = 0usize;
        while next_target < targets.len() {
            let goal = targets[next_target];
            let remaining = goal - self.t;
            if remaining <= 1e-15 * goal.max(1.0) {
                if next_target + 1 < targets.len() {
                    if self.policy.store != StorePolicy::EveryStep {
                        self.store();
                    }
                } else {
                    if self.policy.store != StorePolicy::EveryStep {
                        self.store();
                    }
                    break;
                }
                next_target += 1;
                continue;
            }
            let gap = self.systems.iter().map(|x| min_gap(x)).fold(f64::INFINITY, f64::min);
            let mut dt = self.policy.dt_max.min(remaining).min(self.policy.gap_step(gap, n));
            if remaining - dt < 1e-12 * dt {
                dt = remaining;
            }
            let mut r = rng::stream(self.seed, "dbm", &[step as u64]);
            let sd = dt.sqrt();
            let inc: Vec<f64> = (0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect();
            self.substep(step, dt, inc, 0, 1, kernel)?;
            step += 1;
            if (goal - self.t).abs() <= 1e-15 * goal.max(1.0) {
                self.t = goal;
            }
        }
        if let Some(last) = self.times.last_mut() {
            if (*last - t_end).abs() <= 1e-12 {
                *last = t_end;
            }
        }
        Ok(())
    }
}

fn validate_run(beta: u8, t_end: f64, policy: &DtPolicy) -> Result<()> {
    check_beta(beta)?;
    if !(0.0..=1.0).contains(&t_end) {
        return Err(Error::invalid(format!("t_end = {t_end} must lie in [0, 1]")));
    }
    if !(policy.c > 0.0 && policy.c <= 0.1) || !(policy.dt_max > 0.0) || !(policy.gap_floor >= 0.0) {
        return Err(Error::invalid(
            "dt policy needs 0 < c ≤ 0.1, dt_max > 0 and gap_floor ≥ 0",
        ));
    }
    Ok(())
}

fn integrate<K: FnMut(&[f64], &[f64], f64) -> Result<()>>(
    initials: Vec<Vec<f64>>,
    beta: u8,
    t_end: f64,
    policy: &DtPolicy,
    seed: u64,
    kernel: &mut K,
) -> Result<Vec<DbmPath>> {
    validate_run(beta, t_end, policy)?;
    let n = initials[0].len();
    let mut it = Integrator {
        beta,
        policy,
        seed,
        systems: initials,
        t: 0.0,
        steps: 0,
        splits: 0,
        record: policy.record_noise.then(Vec::new),
        times: Vec::new(),
        stored: Vec::new(),
        buf: vec![0.0; n],
    };
    it.run(t_end, kernel)?;
    let noise = NoiseRecord {
        seed,
        steps: it.record.take(),
    };
    let k = it.systems.len();
    Ok((0..k)
        .map(|s| DbmPath {
            beta,
            n,
            times: it.times.clone(),
            particles: it.stored.iter().map(|st| st[s].clone()).collect(),
            noise: noise.clone(),
            policy: policy.clone(),
            steps: it.steps,
            splits: it.splits,
        })
        .collect())
}

/// Single DBM path from the eigenvalues `initial`.
pub fn run_dbm(initial: &[f64], beta: u8, t_end: f64, policy: &DtPolicy, seed: u64) -> Result<DbmPath> {
    let x = prepare(initial)?;
    Ok(integrate(vec![x], beta, t_end, policy, seed, &mut |_, _, _| Ok(()))?.remove(0))
}

/// Two paths driven by the same Brownian motions and the same step sizes.
pub fn run_coupled(
    init_a: &[f64],
    init_b: &[f64],
    beta: u8,
    t_end: f64,
    policy: &DtPolicy,
    seed: u64,
) -> Result<(DbmPath, DbmPath)> {
    if init_a.len() != init_b.len() {
        return Err(Error::invalid("coupled initial data must have equal length"));
    }
    let (a, b) = (prepare(init_a)?, prepare(init_b)?);
    let mut paths = integrate(vec![a, b], beta, t_end, policy, seed, &mut |_, _, _| Ok(()))?;
    let b = paths.pop().expect("two paths");
    let a = paths.pop().expect("two paths");
    Ok((a, b))
}

/// Re-run a path from its explicit noise record, bit for bit.
pub fn replay(initial: &[f64], beta: u8, record: &NoiseRecord) -> Result<DbmPath> {
    check_beta(beta)?;
    let steps = record
        .steps
        .as_ref()
        .ok_or_else(|| Error::invalid("noise record carries no explicit increments"))?;
    let mut x = prepare(initial)?;
    let n = x.len();
    let sigma = (2.0 / (f64::from(beta) * n as f64)).sqrt();
    let mut buf = vec![0.0; n];
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut particles = vec![x.clone()];
    for (i, st) in steps.iter().enumerate() {
        if st.increments.len() != n {
            return Err(Error::invalid(format!(
                "noise step {i} has {} increments, expected {n}",
                st.increments.len()
            )));
        }
        x = try_step(std::slice::from_ref(&x), st.dt, &st.increments, sigma, &mut buf)
            .ok_or(Error::Collision {
                step: i,
                time: t,
                halvings: 0,
            })?
            .remove(0);
        t += st.dt;
        times.push(t);
        particles.push(x.clone());
    }
    Ok(DbmPath {
        beta,
        n,
        times,
        particles,
        noise: record.clone(),
        policy: DtPolicy {
            store: StorePolicy::EveryStep,
            record_noise: true,
            ..DtPolicy::default()
        },
        steps: steps.len(),
        splits: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelState {
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Substeps a single kernel step may be split into before giving up.
pub const MAX_KERNEL_SUBSTEPS: usize = 4096;

/// One kernel step over `dt`, frozen at the step's endpoints: coupling to
/// all but the nearest neighbours is explicit Euler at the start positions
/// `x`, nearest-neighbour coupling is implicit at the end positions `next`,
/// mirroring the particle step. Pair fluxes are antisymmetric, so `Σu` is
/// conserved to rounding, and each update is a convex combination as long
/// as the explicit part satisfies `dt · max_k Σ_l 1/(N (x_k - x_l)²) ≤ 1`;
/// larger steps are split into equal substeps, up to
/// [`MAX_KERNEL_SUBSTEPS`].
pub fn kernel_step(x: &[f64], next: &[f64], dt: f64, u: &mut [f64], v: &mut [f64], step: usize) -> Result<()> {
    let n = x.len();
    if n < 2 {
        return Ok(());
    }
    let (mut du, mut dv, rate_max) = far_rhs(x, u, v);
    let cfl = rate_max * dt;
    let m = if cfl <= 1.0 { 1 } else { cfl.ceil() as usize };
    if m > MAX_KERNEL_SUBSTEPS {
        return Err(Error::Cfl { step, cfl });
    }
    let h = dt / m as f64;
    let inv_n = 1.0 / n as f64;
    let mut d = vec![1.0; n];
    let mut e = vec![0.0; n - 1];
    for k in 0..n - 1 {
        let gap = next[k + 1] - next[k];
        let c = h * inv_n / (gap * gap);
        d[k] += c;
        d[k + 1] += c;
        e[k] = -c;
    }
    let mut work = Vec::new();
    for i in 0..m {
        if i > 0 {
            (du, dv, _) = far_rhs(x, u, v);
        }
        for k in 0..n {
            u[k] += h * du[k];
            v[k] += h * dv[k];
        }
        thomas(&d, &e, u, &mut work);
        thomas(&d, &e, v, &mut work);
    }
    Ok(())
}

fn far_rhs(x: &[f64], u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    let mut rate = vec![0.0; n];
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let (xk, uk, vk) = (x[k], u[k], v[k]);
        let (mut rk, mut duk, mut dvk) = (0.0, 0.0, 0.0);
        for l in k + 2..n {
            let d = xk - x[l];
            let c = inv_n / (d * d);
            rk += c;
            rate[l] += c;
            let fu = c * (u[l] - uk);
            let fv = c * (v[l] - vk);
            duk += fu;
            du[l] -= fu;
            dvk += fv;
            dv[l] -= fv;
        }
        rate[k] += rk;
        du[k] += duk;
        dv[k] += dvk;
    }
    let rate_max = rate.iter().copied().fold(0.0, f64::max);
    (du, dv, rate_max)
}

/// Evolve `u0` (and `v0 = |u0|`) along the stored positions of `path`.
/// Each stored interval is one frozen-coefficient Euler step, so the path
/// should be stored at every step.
pub fn evolve_kernel(u0: &[f64], path: &DbmPath) -> Result<Vec<KernelState>> {
    if u0.len() != path.n {
        return Err(Error::invalid("kernel initial data has the wrong length"));
    }
    let mut u = u0.to_vec();
    let mut v: Vec<f64> = u0.iter().map(|x| x.abs()).collect();
    let mut out = vec![KernelState {
        time: path.times[0],
        u: u.clone(),
        v: v.clone(),
    }];
    for s in 1..path.times.len() {
        let dt = path.times[s] - path.times[s - 1];
        kernel_step(&path.particles[s - 1], &path.particles[s], dt, &mut u, &mut v, s - 1)?;
        out.push(KernelState {
            time: path.times[s],
            u: u.clone(),
            v: v.clone(),
        });
    }
    Ok(out)
}

/// Run a path and evolve the kernel alongside it, step by step. Only the
/// states selected by the store policy are kept, which makes large `n`
/// affordable.
pub fn run_with_kernel(
    initial: &[f64],
    u0: &[f64],
    beta: u8,
    t_end: f64,
    policy: &DtPolicy,
    seed: u64,
) -> Result<(DbmPath, Vec<KernelState>)> {
    let x = prepare(initial)?;
    if u0.len() != x.len() {
        return Err(Error::invalid("kernel initial data has the wrong length"));
    }
    let mut u = u0.to_vec();
    let mut v: Vec<f64> = u0.iter().map(|x| x.abs()).collect();
    let mut t = 0.0;
    let mut count = 0usize;
    let mut states: Vec<KernelState> = Vec::new();
    let path = {
        let mut kernel = |x: &[f64], next: &[f64], dt: f64| -> Result<()> {
            kernel_step(x, next, dt, &mut u, &mut v, count)?;
            count += 1;
            t += dt;
            states.push(KernelState {
                time: t,
                u: u.clone(),
                v: v.clone(),
            });
            Ok(())
        };
        integrate(vec![x], beta, t_end, policy, seed, &mut kernel)?.remove(0)
    };
    // Keep the kernel states at the stored times.
    let mut kept = vec![KernelState {
        time: 0.0,
        u: u0.to_vec(),
        v: u0.iter().map(|x| x.abs()).collect(),
    }];
    let mut j = 0;
    for &ts in path.times.iter().skip(1) {
        while j < states.len() && states[j].time < ts - 1e-12 * ts.max(1.0) {
            j += 1;
        }
        let mut st = states[j.min(states.len() - 1)].clone();
        st.time = ts;
        kept.push(st);
    }
    Ok((path, kept))
}

/// `f_t(z) = e^{-t/2} Σ u_k / (x_k(t) - z)` at a stored time.
pub fn observable_f(path: &DbmPath, kernel: &[KernelState], z: Complex64, t: f64) -> Result<Complex64> {
    observable(path, kernel, z, t, false)
}

/// As [`observable_f`] with `v` in place of `u`.
pub fn observable_f_tilde(path: &DbmPath, kernel: &[KernelState], z: Complex64, t: f64) -> Result<Complex64> {
    observable(path, kernel, z, t, true)
}

fn observable(path: &DbmPath, kernel: &[KernelState], z: Complex64, t: f64, tilde: bool) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(Error::domain("observable_f", "z must be off the real axis"));
    }
    let i = path.index_of_time(t)?;
    let st = kernel
        .get(i)
        .ok_or_else(|| Error::invalid("kernel trajectory shorter than the path"))?;
    let w = if tilde { &st.v } else { &st.u };
    Ok(f_sum(&path.particles[i], w, z) * (-0.5 * t).exp())
}

/// `Σ w_k / (x_k - z)`.
pub fn f_sum(x: &[f64], w: &[f64], z: Complex64) -> Complex64 {
    x.iter().zip(w).map(|(&xk, &wk)| wk / (xk - z)).sum()
}

/// `max |x_k(t) - γ_k| / (n^{-2/3} ĥ^{-1/3})` over stored states, with
/// `ĥ = min(k, n + 1 - k)`.
pub fn rigidity_report(path: &DbmPath) -> f64 {
    rigidity_of(path.n, path.particles.iter().map(|v| v.as_slice()))
}

pub fn rigidity_of<'a, I: Iterator<Item = &'a [f64]>>(n: usize, states: I) -> f64 {
    let gamma = spectral::quantiles(n);
    let nf = n as f64;
    let scale: Vec<f64> = (1..=n)
        .map(|k| nf.powf(-2.0 / 3.0) * (k.min(n + 1 - k) as f64).powf(-1.0 / 3.0))
        .collect();
    let mut worst = 0.0f64;
    for x in states {
        for k in 0..n {
            worst = worst.max((x[k] - gamma[k]).abs() / scale[k]);
        }
    }
    worst
}

/// Bulk cut-off for [`ubar`].
pub const UBAR_ALPHA: f64 = 0.1;

/// Homogenised gap predictor
/// `ū_k(t) = (1/(N Im m(γ_k + it))) Σ_j Im(1/(γ_j - γ_k - it)) (a_j - b_j)`.
pub fn ubar(a: &[f64], b: &[f64], t: f64, k: usize) -> Result<f64> {
    let n = a.len();
    if b.len() != n || n == 0 {
        return Err(Error::invalid("ubar needs two configurations of equal length"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("ubar needs t > 0"));
    }
    let nf = n as f64;
    if (k as f64) < UBAR_ALPHA * nf || (k as f64) > (1.0 - UBAR_ALPHA) * nf || k == 0 {
        return Err(Error::invalid(format!("index {k} is outside the bulk of {n}")));
    }
    let gamma = spectral::quantiles(n);
    let gk = gamma[k - 1];
    let m = spectral::m_sc(Complex64::new(gk, t))?;
    let s: f64 = gamma
        .iter()
        .zip(a.iter().zip(b))
        .map(|(gj, (aj, bj))| t / ((gj - gk).powi(2) + t * t) * (aj - bj))
        .sum();
    Ok(s / (nf * m.im))
}
