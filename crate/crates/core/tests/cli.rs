use std::fs;
use std::process::Command;

use parabolic_iso::cli::report;

fn piso() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_piso"));
    c.env_remove("PISO_OUT");
    c
}

const SMALL: [&str; 6] = ["--grid", "64", "--steps", "64", "--deltas", "0.01,0.05"];

#[test]
fn spectrum_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = piso()
        .args(["spectrum", "--modes", "4", "--out"])
        .arg(dir.path())
        .args(SMALL)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS omega1_negative")));
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,omega_k,fd_error"));
    assert_eq!(csv.lines().count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("spectrum.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["setup"]["geometry"]["cells"], 64);
    assert!(manifest["checks"].as_array().unwrap().iter().all(|c| c["check_name"].is_string()));
}

#[test]
fn config_file_and_env_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{"geometry": {"cells": 48}, "time": {"steps": 48}, "experiments": {"deltas": [0.02], "families": ["annulus"]}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("from-env");
    let out = piso()
        .env("PISO_OUT", &out_dir)
        .arg("verify-ti")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("deficit_ti.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("competitor_id,family,delta_or_params,deficit,l1_sq,weight_min,ratio"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].contains(",annulus,"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"geometry": {"cells": "many"}}"#).unwrap();
    let code = |args: &[&str]| piso().args(args).arg("--out").arg(dir.path()).output().unwrap().status.code();
    assert_eq!(code(&["bathtub", "--config", bad.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["verify-ti", "--families", "triangle"]), Some(2));
    assert_eq!(code(&["spectrum", "--eps", "-1"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["spectrum", "--grid", "2"]), Some(2));
}

#[test]
fn report_merges_manifests_and_flags_corrupt_ones() {
    let dir = tempfile::tempdir().unwrap();
    let run = piso().args(["optimize", "--out"]).arg(dir.path()).args(SMALL).output().unwrap();
    assert!(run.status.success());
    fs::write(dir.path().join("broken.manifest.json"), "{ not json").unwrap();
    let summary = report(dir.path()).unwrap();
    assert_eq!(summary.manifests.len(), 1);
    assert!(summary.manifests.contains_key("optimize.manifest.json"));
    assert_eq!(summary.failed_checks, 0);
    assert!(summary.total_checks >= 1);
    assert_eq!(summary.warnings.len(), 1);

    let out = piso().args(["report", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let merged: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(merged["total_checks"], summary.total_checks);
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.manifest.json"));
}

#[test]
fn report_of_missing_directory_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let s = report(&dir.path().join("nothing-here")).unwrap();
    assert_eq!(s.total_checks, 0);
    assert!(s.manifests.is_empty());
}
