use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmt_logfield::clt::{self, TestFunction};
use rmt_logfield::dbm::{evolve_kernel, run_dbm, DtPolicy};
use rmt_logfield::ensemble::{make_profile, sample_matrix, EntryLaw, ProfileKind, SymmetryClass, VarianceProfile};
use rmt_logfield::experiments::{run_experiment, ExperimentConfig};
use rmt_logfield::spectral::{self, CharacteristicMode};
use rmt_logfield::{quad, qve, Complex64};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn analytic_identities() -> Outcome {
    let mut msc = 0.0f64;
    for i in 0..40 {
        for j in 0..25 {
            let e = -3.0 + 6.0 * i as f64 / 39.0;
            let eta = 10f64.powf(-6.0 + 6.7 * j as f64 / 24.0);
            let z = c(e, eta);
            let m = spectral::m_sc(z).map_err(err)?;
            msc = msc.max((m * m + z * m + 1.0).norm());
        }
    }
    let mut quant = 0.0f64;
    for k in 1..=1000 {
        let g = spectral::quantile(k, 1000).map_err(err)?;
        quant = quant.max((spectral::semicircle_cdf(g) - k as f64 / 1000.0).abs());
    }
    let u2 = spectral::log_potential(c(2.0, 0.0)).map_err(err)?;
    let q = quad::adaptive(
        |t: f64| (4.0 * (0.5 * t).sin().powi(2)).ln() * 2.0 / PI * t.sin().powi(2),
        0.0,
        PI,
        1e-12,
    )
    .map_err(err)?;
    let u_err = (u2 - 0.5).norm().max((q - 0.5).abs()).max((u2.re - q).abs());
    let mut chr = 0.0f64;
    for z in [c(0.0, 1.0), c(0.5, 0.1), c(1.9, 0.01), c(-1.2, 0.05), c(2.5, 0.2)] {
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let a = spectral::characteristic(z, t, CharacteristicMode::ClosedForm).map_err(err)?;
            let b = spectral::characteristic(z, t, CharacteristicMode::Ode).map_err(err)?;
            chr = chr.max((a - b).norm());
        }
    }
    let mut ward = 0.0f64;
    for (kind, class) in [
        (ProfileKind::Goe, SymmetryClass::Real),
        (ProfileKind::Gue, SymmetryClass::ComplexHermitian),
    ] {
        let p = make_profile(kind, 64).map_err(err)?;
        let h = sample_matrix(&p, EntryLaw::Gaussian, class, 1);
        for z in [c(0.3, 0.05), c(-1.8, 0.01), c(0.0, 1.0)] {
            ward = ward.max(spectral::ward_residual(&h, z).map_err(err)?);
        }
    }
    let pass = msc <= 1e-12 && quant <= 1e-10 && u_err <= 1e-8 && chr <= 1e-8 && ward <= 1e-9;
    Ok((
        pass,
        format!("m_sc {msc:.1e}, quantile {quant:.1e}, U(2) {u_err:.1e}, characteristic {chr:.1e}, ward {ward:.1e}"),
    ))
}

fn variance_engine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for trial in 0..40 {
        let deg = trial % 7;
        let coeffs: Vec<f64> = (0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = TestFunction::polynomial(&coeffs).map_err(err)?;
        let a = clt::variance_main(&f).map_err(err)?;
        let b = clt::variance_main_symmetric(&f).map_err(err)?;
        let ch = clt::variance_main_chebyshev(&f, 64);
        let scale = a.abs().max(1e-12);
        worst = worst.max((a - b).abs() / scale).max((a - ch).abs() / scale);
    }
    let one = TestFunction::polynomial(&[1.0]).map_err(err)?;
    let mut constant = 0.0f64;
    for (kind, law, beta) in [
        (ProfileKind::Uniform, EntryLaw::Rademacher, 1),
        (ProfileKind::Goe, EntryLaw::Gaussian, 1),
        (ProfileKind::Gue, EntryLaw::Gaussian, 2),
    ] {
        let s = make_profile(kind, 40).map_err(err)?;
        let v = clt::variance_gw(&one, &s, law, beta).map_err(err)?;
        constant = constant
            .max(v.main.abs())
            .max(v.trace_s_term.abs())
            .max(v.quartic_term.abs())
            .max(v.epsilon_diag.abs());
    }
    let x = TestFunction::polynomial(&[0.0, 1.0]).map_err(err)?;
    let main_x = clt::variance_main(&x).map_err(err)?;
    let pass = worst <= 1e-6 && constant <= 1e-12 && (main_x - 2.0).abs() <= 1e-12;
    Ok((
        pass,
        format!("oracle rel err {worst:.1e}, f=1 terms {constant:.1e}, f=x main {main_x:.12}"),
    ))
}

fn experiment(json: &str) -> Outcome {
    let cfg = ExperimentConfig::from_json(json).map_err(err)?;
    let r = run_experiment(&cfg, None).map_err(err)?;
    if r.checks.is_empty() {
        return Err("no criteria were evaluated".into());
    }
    let detail = r
        .checks
        .iter()
        .map(|c| {
            format!(
                "{}={:.4}{}",
                c.name,
                c.value,
                if c.pass { "" } else { " (out of band)" }
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    Ok((r.passed(), detail))
}

fn both(a: Outcome, b: Outcome) -> Outcome {
    let (pa, da) = a?;
    let (pb, db) = b?;
    Ok((pa && pb, format!("{da}; {db}")))
}

fn exact_anchor() -> Outcome {
    experiment(
        r#"{"experiment":"variance_match","n":256,"samples":4000,"profile":"uniform",
            "test_functions":[{"kind":"polynomial","coeffs":[0,1]}],"seed":3,
            "criteria":{"z_var_f0_n256":{"lo":-3,"hi":3}}}"#,
    )
}

fn log_law_growth() -> Outcome {
    let run = |beta: u8| {
        experiment(&format!(
            r#"{{"experiment":"logfield_clt","n":[256,512,1024,2048],"samples":2000,"beta":{beta},
                "energies":[0.0],"seed":4,
                "criteria":{{"slope_ratio_var_re_e0":{{"lo":0.8,"hi":1.2}}}}}}"#
        ))
    };
    both(run(1), run(2))
}

fn edge_mean_shift() -> Outcome {
    let ladder = |beta: u8, criteria: &str| {
        experiment(&format!(
            r#"{{"experiment":"logfield_clt","n":[256,512,1024,2048],"samples":2000,"beta":{beta},
                "energies":[2.0],"seed":5,"criteria":{{{criteria}}}}}"#
        ))
    };
    both(
        ladder(1, r#""slope_ratio_mean_re_e0":{"lo":0.75,"hi":1.25}"#),
        ladder(2, r#""slope_mean_re_e0":{"lo":-0.05,"hi":0.05}"#),
    )
}

fn eigenvalue_clt() -> Outcome {
    experiment(
        r#"{"experiment":"eigenvalue_clt","n":1024,"samples":2000,"indices":[{"fraction":0.5},4],"seed":6,
            "criteria":{"var_y_k0_n1024":{"lo":0.7,"hi":1.3},"ks_y_k0_n1024":{"hi":0.08},
                        "var_ratio_y_k1_n1024":{"lo":0.45,"hi":0.95}}}"#,
    )
}

fn wegner() -> Outcome {
    experiment(
        r#"{"experiment":"wegner","n":512,"samples":4000,"energies":[0.0,{"edge_exponent":0.4}],
            "deltas":[0.2,0.1,0.05],"seed":7,
            "criteria":{"all_monotone":{"lo":1},"min_ratio":{"lo":0.3},"max_ratio":{"hi":0.7}}}"#,
    )
}

fn local_law() -> Outcome {
    experiment(
        r#"{"experiment":"local_law","n":[512,1024],"samples":400,"energies":[0.0,{"edge_exponent":0.3}],
            "eta_steps":[0,2,4,6,8],"seed":8,"criteria":{"max_ratio_p1":{"hi":1.5}}}"#,
    )
}

fn coupling_and_advection() -> Outcome {
    both(
        experiment(
            r#"{"experiment":"coupling","n":256,"samples":20,"law":"rademacher","t":0.5,"seed":9,
                "criteria":{"frac_within_bound":{"lo":0.9}}}"#,
        ),
        experiment(
            r#"{"experiment":"advection","n":512,"samples":4,"law":"rademacher","t":0.1,"seed":9,
                "criteria":{"median_residual":{"hi":0.1}}}"#,
        ),
    )
}

fn characteristic_function() -> Outcome {
    experiment(
        r#"{"experiment":"variance_match","n":1024,"samples":2000,
            "test_functions":[{"kind":"mesoscopic","e":0.0,"scale_exponent":0.3}],"seed":10,
            "criteria":{"char_err_f0_n1024":{"hi":0.1}}}"#,
    )
}

fn property_suites() -> Outcome {
    let mut kernel_ok = true;
    for seed in 0..8u64 {
        let n = 12 + 4 * seed as usize;
        let p = make_profile(ProfileKind::Goe, n).map_err(err)?;
        let h = sample_matrix(&p, EntryLaw::Gaussian, SymmetryClass::Real, seed);
        let x0 = spectral::eigenvalues(&h).map_err(err)?.lambdas;
        let path = run_dbm(&x0, 1, 0.05, &DtPolicy::default(), seed).map_err(err)?;
        let u0: Vec<f64> = (0..n).map(|i| ((i as f64 + seed as f64) * 1.7).sin()).collect();
        let l1: f64 = u0.iter().map(|v| v.abs()).sum();
        let s0: f64 = u0.iter().sum();
        let (mut hi, mut lo) = (f64::INFINITY, f64::NEG_INFINITY);
        for st in evolve_kernel(&u0, &path).map_err(err)? {
            let mx = st.u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mn = st.u.iter().copied().fold(f64::INFINITY, f64::min);
            kernel_ok &= mx <= hi + 1e-13 && mn >= lo - 1e-13;
            kernel_ok &= (st.u.iter().sum::<f64>() - s0).abs() <= 1e-8 * l1;
            hi = mx;
            lo = mn;
        }
        kernel_ok &= path.particles.iter().all(|x| x.windows(2).all(|w| w[0] < w[1]));
    }

    let mut qve_res = 0.0f64;
    let mut reduction = 0.0f64;
    let two_block = VarianceProfile::two_block(24, 1.5, 0.5).map_err(err)?;
    let profiles = [
        make_profile(ProfileKind::Uniform, 24).map_err(err)?,
        make_profile(ProfileKind::Circulant { bandwidth: 3 }, 24).map_err(err)?,
        make_profile(ProfileKind::Goe, 24).map_err(err)?,
        two_block,
    ];
    for (i, s) in profiles.iter().enumerate() {
        for z in [c(0.3, 0.1), c(-1.9, 0.01), c(2.5, 1e-3), c(0.0, 1.0)] {
            let sol = qve::solve(s, z, 1e-12).map_err(err)?;
            qve_res = qve_res.max(sol.residual);
            if i < 2 {
                let msc = spectral::m_sc(z).map_err(err)?;
                reduction = sol.m.iter().fold(reduction, |a, m| a.max((m - msc).norm()));
            }
        }
    }

    let cfg = ExperimentConfig::from_json(
        r#"{"experiment":"logfield_clt","n":[64,128],"samples":24,"energies":[0.0,1.0],"seed":11}"#,
    )
    .map_err(err)?;
    let a = run_experiment(&cfg, Some(1)).map_err(err)?;
    let b = run_experiment(&cfg, Some(4)).map_err(err)?;
    let same = a.raw_csv().map_err(err)? == b.raw_csv().map_err(err)? && a.derived == b.derived;

    let pass = kernel_ok && qve_res <= 1e-12 && reduction <= 1e-11 && same;
    Ok((
        pass,
        format!(
            "kernel conservation/max principle {}, QVE residual {qve_res:.1e}, row-stochastic deviation {reduction:.1e}, thread-count invariance {}",
            if kernel_ok { "held" } else { "violated" },
            if same { "held" } else { "violated" }
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("analytic identities", analytic_identities),
        ("variance engine oracles", variance_engine),
        ("exact Monte Carlo anchor", exact_anchor),
        ("log-law variance growth", log_law_growth),
        ("edge mean shift", edge_mean_shift),
        ("eigenvalue CLT", eigenvalue_clt),
        ("Wegner estimate", wegner),
        ("local law", local_law),
        ("coupling and advection", coupling_and_advection),
        ("characteristic function", characteristic_function),
        ("property suites", property_suites),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} ({name}): {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
