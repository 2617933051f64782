use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kbbm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbbm"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .expect("kbbm binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn closed_form_prints_probability() {
    let dir = tempfile::tempdir().unwrap();
    let out = kbbm(&["closed-form", "--x", "1", "--t", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.6826894921");
    let result = json(&dir.path().join("closed_form.json"));
    assert!((result["killed_transition_prob"].as_f64().unwrap() - 0.6826894921370859).abs() < 1e-14);
    assert!((result["expected_count"].as_f64().unwrap() - 0.6826894921370859 * 1f64.exp()).abs() < 1e-12);
}

#[test]
fn manifest_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = kbbm(&["simulate", "--seed", "17", "--t-grid", "1,2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 17);
    assert_eq!(manifest["partial"], false);
    assert_eq!(manifest["settings"]["t_grid"], serde_json::json!([1.0, 2.0]));
    assert_eq!(manifest["settings"]["beta"], 1.0);
    let files: Vec<_> = manifest["outputs"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_owned()).collect();
    assert!(files.iter().any(|f| f.ends_with("positions.csv")));
    assert!(files.iter().any(|f| f.ends_with("summary.csv")));
    let positions = std::fs::read_to_string(dir.path().join("positions.csv")).unwrap();
    assert!(positions.starts_with("time,particle_index,position\n"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "theta = 0.5\nx = 2.0\nt = 3.0\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = kbbm(&["closed-form", "--config", cfg.to_str().unwrap(), "--t", "1.5"], &out_dir);
    assert_eq!(out.status.code(), Some(0));
    let result = json(&out_dir.join("closed_form.json"));
    assert_eq!(result["theta"], 0.5);
    assert_eq!(result["x"], 2.0);
    assert_eq!(result["t"], 1.5);
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "thetta = 0.5\n").unwrap();
    let out = kbbm(&["closed-form", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("thetta"));
}

#[test]
fn usage_and_domain_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kbbm(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(kbbm(&["simulate", "--bogus", "1"], dir.path()).status.code(), Some(1));
    assert_eq!(kbbm(&["closed-form", "--x", "-1"], dir.path()).status.code(), Some(1));
    assert_eq!(kbbm(&["closed-form", "--interval", "3,1"], dir.path()).status.code(), Some(1));
    assert_eq!(kbbm(&["simulate", "--law", "0.5,0.6"], dir.path()).status.code(), Some(1));
}

#[test]
fn population_cap_marks_run_partial() {
    let dir = tempfile::tempdir().unwrap();
    let out = kbbm(&["simulate", "--x", "3", "--t-grid", "1,30", "--max-population", "20"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["partial"], true);
}

#[test]
fn kesten_rate_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = kbbm(&["kesten-rate", "--theta", "0", "--t-grid", "10,20,40,80"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("kesten.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    let summary = json(&dir.path().join("kesten.json"));
    assert!(summary["fitted_constant"].as_f64().unwrap() > 0.0);
}

#[test]
fn expectation_check_passes_on_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = kbbm(&["validate-expansion", "--theta", "0.5", "--m", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], true);
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
}
