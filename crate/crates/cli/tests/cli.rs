use std::path::Path;
use std::process::{Command, Output};

use zoconex::experiment::{default_config, ExperimentConfig};

fn zoconex(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zoconex"));
    cmd.args(args).env_remove("ZOCONEX_SEED");
    if let Some(s) = seed_env {
        cmd.env("ZOCONEX_SEED", s);
    }
    cmd.output().expect("binary runs")
}

const SMALL: &str = r#"
family = "qcqp-convex"
n = 4
m = 2
iterations = 300
trials = 2
seed = 9
checkpoints = 5

[schedule]
scale = 0.01
"#;

fn run_small(dir: &Path, extra: &[&str], seed_env: Option<&str>) -> (Output, Vec<u8>) {
    let config = dir.join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.join("out");
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"];
    args.extend_from_slice(extra);
    let output = zoconex(&args, seed_env);
    let trace = std::fs::read(out.join("trace.csv")).unwrap_or_default();
    (output, trace)
}

fn resolved_seed(dir: &Path) -> u64 {
    ExperimentConfig::load(&dir.join("out/resolved_config.toml")).unwrap().seed
}

#[test]
fn gen_prints_a_loadable_preset() {
    for name in ["qcqp-convex", "qcqp-nonconvex", "smoothing-sweep"] {
        let out = zoconex(&["gen", name], None);
        assert!(out.status.success());
        let parsed = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(parsed, default_config(name).unwrap());
    }
    assert!(!zoconex(&["gen", "mnist"], None).status.success());
}

#[test]
fn run_is_reproducible_and_writes_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (out_a, trace_a) = run_small(a.path(), &[], None);
    let (_, trace_b) = run_small(b.path(), &[], None);
    assert!(out_a.status.success(), "{}", String::from_utf8_lossy(&out_a.stderr));
    assert!(!trace_a.is_empty());
    assert_eq!(trace_a, trace_b);
    assert!(a.path().join("out/summary.csv").exists());
    assert_eq!(resolved_seed(a.path()), 9);
    // 2 trials x 5 checkpoints plus the header
    assert_eq!(String::from_utf8(trace_a).unwrap().lines().count(), 11);
}

#[test]
fn seed_precedence_is_flag_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let (_, from_file) = run_small(dir.path(), &[], None);
    let (out, from_env) = run_small(dir.path(), &[], Some("123"));
    assert!(out.status.success());
    assert_eq!(resolved_seed(dir.path()), 123);
    assert_ne!(from_env, from_file);
    let (_, from_flag) = run_small(dir.path(), &["--seed", "77"], Some("123"));
    assert_eq!(resolved_seed(dir.path()), 77);
    assert_ne!(from_flag, from_env);
}

#[test]
fn bad_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "family = \"qcqp-convex\"\nn = 4\ntrials = 0\n").unwrap();
    let out = zoconex(&["run", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");

    std::fs::write(&config, "family = \"qcqp-convex\"\nsigma = 1.0\n").unwrap();
    let out = zoconex(&["run", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(!out.status.success() && err.contains("line 2"), "{err}");
}

#[test]
fn missing_output_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = zoconex(&["run", "--config", config.to_str().unwrap()], None);
    assert!(!out.status.success());
}

#[test]
fn verify_passes() {
    let out = zoconex(&["verify"], None);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
