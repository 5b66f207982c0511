use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn alphacl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alphacl"))
        .args(args)
        .env_remove("ALPHACL_OUT_DIR")
        .output()
        .expect("spawn alphacl")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("read json")).expect("parse json")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().expect("utf-8 path").to_string()
}

#[test]
fn grad_check_infonce_reports_small_residual() {
    let tmp = TempDir::new().unwrap();
    let out = alphacl(&["grad-check", "--loss", "infonce", "--n", "16", "--dim", "8", "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&tmp.path().join("grad_check.json"));
    let losses = report["losses"].as_array().unwrap();
    assert_eq!(losses.len(), 1);
    assert_eq!(losses[0]["loss"], "infonce");
    assert!(losses[0]["max_residual"].as_f64().unwrap() <= 1e-8);
    assert!(tmp.path().join("grad_report_example.json").exists());
}

#[test]
fn flow_last_row_reaches_top_eigenvalue() {
    let tmp = TempDir::new().unwrap();
    let out = alphacl(&["flow", "--layers", "5", "--dim", "8", "--seed", "3", "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("flow.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    assert_eq!(header.len(), 2 + 2 * 5 + 2);
    assert!((last[col("two_energy")] - last[col("lambda_max")]).abs() <= 1e-4);
}

#[test]
fn verify_all_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ra = alphacl(&["verify-all", "--seed", "7", "--out", &out_arg(a.path())]);
    let rb = alphacl(&["verify-all", "--seed", "7", "--threads", "1", "--out", &out_arg(b.path())]);
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stdout));
    assert_eq!(rb.status.code(), Some(0));
    let manifest = read_json(&a.path().join("manifest.json"));
    for name in manifest["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name} differs");
    }
    let suites = read_json(&a.path().join("verify_all.json"));
    assert_eq!(suites.as_array().unwrap().len(), 10);
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    let again = tmp.path().join("again");
    let out = alphacl(&["relu", "--experiment", "sticky,diversity", "--runs", "4", "--seed", "5", "--out", &out_arg(&first)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest = first.join("manifest.json");
    let out = alphacl(&["rerun", manifest.to_str().unwrap(), "--out", &out_arg(&again)]);
    assert_eq!(out.status.code(), Some(0));
    let m = read_json(&manifest);
    assert_eq!(m["subcommand"], "relu");
    assert_eq!(m["config"]["runs"], "4");
    for name in m["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(alphacl(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(alphacl(&["flow", "--no-such-flag", "1"]).status.code(), Some(2));
    assert_eq!(alphacl(&["flow", "--dim", "eight"]).status.code(), Some(2));
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "not_a_key = 1\n").unwrap();
    let dir = tmp.path().join("out");
    assert_eq!(alphacl(&["flow", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&dir)]).status.code(), Some(2));
    assert_eq!(alphacl(&["relu", "--experiment", "bogus", "--out", &out_arg(&dir)]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_one_with_failure_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("short.cfg");
    fs::write(&cfg, "# stop long before convergence\nmax_steps = 1\n").unwrap();
    let out = alphacl(&["flow", "--config", cfg.to_str().unwrap(), "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let failures = read_json(&tmp.path().join("failures.json"));
    assert_eq!(failures["subcommand"], "flow");
    assert!(!failures["failed"].as_array().unwrap().is_empty());
    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["status"], "fail");
    assert_eq!(manifest["exit_code"], 1);
}

#[test]
fn flags_override_config_file_over_defaults() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "dim = 6\nlayers = 3\n").unwrap();
    let out = alphacl(&["flow", "--config", cfg.to_str().unwrap(), "--layers", "2", "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(0));
    let config = &read_json(&tmp.path().join("manifest.json"))["config"];
    assert_eq!(config["dim"], "6");
    assert_eq!(config["layers"], "2");
    assert_eq!(config["eta"], "0.05");
    let header = fs::read_to_string(tmp.path().join("flow.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(header.contains("sigma1_w2") && !header.contains("sigma1_w3"));
}

#[test]
fn output_dir_env_override() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_alphacl"))
        .args(["alpha-solve", "--matrices", "3"])
        .env("ALPHACL_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let dir = tmp.path().join("alpha-solve");
    assert!(dir.join("manifest.json").exists());
    assert!(dir.join("alpha_solve.json").exists());
    let explicit = tmp.path().join("explicit");
    let out = Command::new(env!("CARGO_BIN_EXE_alphacl"))
        .args(["alpha-solve", "--matrices", "3", "--out", explicit.to_str().unwrap()])
        .env("ALPHACL_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(explicit.join("manifest.json").exists());
}

#[test]
fn train_writes_log_and_summary() {
    let tmp = TempDir::new().unwrap();
    let out = alphacl(&["train", "--variant", "quadratic", "--epochs", "3", "--seed", "2", "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = read_json(&tmp.path().join("train.json"));
    assert_eq!(summary["variant"], "quadratic");
    assert_eq!(summary["seed"], 2);
    let acc = summary["probe_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let log = fs::read_to_string(tmp.path().join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
}
