use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rmt_logfield::cli::help_text;

const SUBCOMMANDS: [&str; 7] = ["sample", "spectrum", "dbm", "qve", "predict", "experiment", "report"];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmt-logfield"))
}

fn call(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

#[test]
fn help_matches_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut names: Vec<Option<&str>> = vec![None];
    names.extend(SUBCOMMANDS.iter().map(|s| Some(*s)));
    for sub in names {
        let text = help_text(sub);
        let path = golden_dir().join(format!("help_{}.txt", sub.unwrap_or("main")));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(text, want, "help for {sub:?} drifted; rerun with UPDATE_GOLDEN=1");
        let mut args = sub.into_iter().collect::<Vec<_>>();
        args.push("--help");
        let o = call(&args);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(stdout(&o), want);
    }
}

#[test]
fn exit_codes() {
    assert_eq!(call(&["--version"]).status.code(), Some(0));
    assert_eq!(call(&[]).status.code(), Some(1));
    assert_eq!(call(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(call(&["sample", "--n", "zero"]).status.code(), Some(1));
    assert_eq!(call(&["sample", "--n", "16"]).status.code(), Some(1), "missing seed");
    assert_eq!(call(&["report", "/definitely/not/here"]).status.code(), Some(1));
    let o = call(&["predict", "delta", "--energy", "2", "--n", "1000", "--beta", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn predict_delta_value() {
    let o = call(&["predict", "delta", "--energy", "2", "--n", "1000", "--beta", "1"]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    // -(1/6) ln 1000 = -1.151292...
    assert!((v + 1000f64.ln() / 6.0).abs() < 1e-9, "{v}");
}

#[test]
fn qve_density_is_semicircle_for_uniform_profile() {
    let o = call(&[
        "qve",
        "density",
        "--profile",
        "uniform",
        "--n",
        "32",
        "--energy",
        "0",
        "--energy",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Vec<(f64, f64)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split_whitespace().map(|t| t.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 2);
    for (e, d) in rows {
        let want = (4.0 - e * e).sqrt() / (2.0 * std::f64::consts::PI);
        assert!((d - want).abs() < 1e-3, "E={e}: {d} vs {want}");
    }
}

const CONFIG: &str =
    r#"{"experiment":"eigenvalue_clt","n":[32,64],"samples":40,"indices":[{"fraction":0.5}],"seed":1}"#;

fn run_experiment_cli(dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let mut args = vec!["experiment", "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    call(&args)
}

#[test]
fn experiment_is_reproducible_from_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run_experiment_cli(tmp.path(), &["--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ra = std::fs::read(a.join("raw.csv")).unwrap();
    let rb = std::fs::read(b.join("raw.csv")).unwrap();
    assert!(!ra.is_empty());
    assert_eq!(ra, rb);
    let summary = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_clock_secs");
        v
    };
    assert_eq!(summary(&a), summary(&b));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    use sha2::Digest;
    let digest: String = sha2::Sha256::digest(&ra).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(manifest["raw_sha256"], serde_json::Value::String(digest));
    assert_eq!(manifest["config_hash"].as_str().map(str::len), Some(64));

    let c = tmp.path().join("c");
    let o = run_experiment_cli(tmp.path(), &["--seed", "8", "--out", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(std::fs::read(c.join("raw.csv")).unwrap(), ra);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let o = run_experiment_cli(
        tmp.path(),
        &["--seed", "3", "--n", "48", "--out", first.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    let echoed = err
        .lines()
        .find_map(|l| l.strip_prefix("resolved config: "))
        .expect("resolved config on stderr");
    let cfg2 = tmp.path().join("echoed.json");
    std::fs::write(&cfg2, echoed).unwrap();
    let second = tmp.path().join("second");
    let o = call(&[
        "experiment",
        "--config",
        cfg2.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("raw.csv")).unwrap(),
        std::fs::read(second.join("raw.csv")).unwrap()
    );
    let raw = std::fs::read_to_string(second.join("raw.csv")).unwrap();
    assert!(raw.lines().skip(1).all(|l| l.starts_with("48,")));
}

#[test]
fn failing_criteria_exit_two_and_report_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"eigenvalue_clt","n":32,"samples":20,"seed":2,
            "criteria":{"var_y_k0_n32":{"lo":1000}}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = call(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));

    let o = call(&["report", out.join("summary.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("var_y_k0_n32"), "{text}");
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"wegner","n":32,"samples":10,"seed":1,"bogus":true}"#,
    )
    .unwrap();
    let o = call(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}
