//! End-to-end behavior of the `drcouple` binary: exit codes, file outputs,
//! determinism, and flag plumbing.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drcouple"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn emit_data(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join("data.csv");
    let out = run(&[
        "simulate",
        "--emit-data",
        path.to_str().unwrap(),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert!(out.status.success(), "emit-data failed: {out:?}");
    path
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "fit",
        "--input",
        "/nonexistent/nope.csv",
        "--seed",
        "1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr is machine-readable JSON");
    assert_eq!(err["error"]["kind"], "data");
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 100, 7);
    let out = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_replications_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--n",
        "100",
        "--replications",
        "0",
        "--seed",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_reports_ate_near_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 400, 11);
    let out_dir = tmp.path().join("fit");
    let out = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--draws",
        "2000",
        "--method",
        "proposed,g-formula,freq-dr",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("fit.json"), "stdout: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("fit.json")).unwrap()).unwrap();
    let fits = report["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 3);
    for fit in fits {
        let mean = fit["mean"].as_f64().unwrap();
        let ci = fit["ci"].as_array().unwrap();
        let sd = (ci[1].as_f64().unwrap() - ci[0].as_f64().unwrap()) / 3.92;
        assert!(
            (mean - 110.0).abs() < 3.0 * sd + 1e-9,
            "{}: mean {mean} vs 110 (sd {sd})",
            fit["method"]
        );
    }
}

#[test]
fn prune_flag_produces_a_pruning_event() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 300, 13);
    let out_dir = tmp.path().join("fit");
    let out = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--draws",
        "1500",
        "--tilt",
        "smc",
        "--prune",
        "0.8",
        "--method",
        "proposed",
        // misspecify the outcome so the climb has work to do
        "--outcome-cols",
        "x1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let history = fs::read_to_string(out_dir.join("tilt_history_proposed.csv")).unwrap();
    assert!(history.lines().next().unwrap().contains("t,lambda,mean_moment,ess"));
    assert!(history.contains("Prune"), "history lacks a pruning event:\n{history}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["fits"][0]["tilt"]["pruned"], true);
}

#[test]
fn dump_draws_writes_audit_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 200, 19);
    let out_dir = tmp.path().join("fit");
    let out = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--draws",
        "300",
        "--method",
        "g-formula",
        "--dump-draws",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["outcome_draws.csv", "propensity_draws.csv"] {
        let text = fs::read_to_string(out_dir.join(name)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.ends_with("log_weight"), "{name} header: {header}");
        assert_eq!(text.lines().count(), 301, "{name} should hold one row per draw");
    }
}

#[test]
fn simulate_writes_table_and_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |dir: &str| {
        vec![
            "simulate".to_string(),
            "--n".into(),
            "150".into(),
            "--replications".into(),
            "3".into(),
            "--draws".into(),
            "400".into(),
            "--method".into(),
            "g-formula,freq-dr".into(),
            "--seed".into(),
            "21".into(),
            "--threads".into(),
            "2".into(),
            "--long".into(),
            "--out".into(),
            dir.to_string(),
        ]
    };
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for dir in [&dir_a, &dir_b] {
        let out = bin()
            .args(args(dir.to_str().unwrap()))
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let csv_a = fs::read(dir_a.join("metrics.csv")).unwrap();
    let csv_b = fs::read(dir_b.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "reruns must be byte-identical");

    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 3, "header + one row per method:\n{text}");
    assert!(text.starts_with("method,abias,ese,rmse,cp,avl"));

    let long = fs::read_to_string(dir_a.join("replications.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 3 * 2);
    assert!(dir_a.join("report.json").exists());
}

#[test]
fn select_with_absurd_threshold_exits_numeric() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 150, 31);
    let out = run(&[
        "select",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--draws",
        "400",
        "--threshold",
        "1000",
        "--out",
        tmp.path().join("sel").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("threshold"));
}

#[test]
fn select_recovers_signal_covariates() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 400, 41);
    let out_dir = tmp.path().join("sel");
    let out = run(&[
        "select",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--draws",
        "1500",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("selection.json")).unwrap())
            .unwrap();
    let selected: Vec<String> = report["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for name in ["x1", "x2", "x3", "x4"] {
        assert!(selected.contains(&name.to_string()), "{name} missing from {selected:?}");
    }
    let mean = report["ate"]["mean"].as_f64().unwrap();
    assert!((mean - 110.0).abs() < 2.0, "selection ATE {mean}");
}

#[test]
fn sensitivity_runs_with_point_prior() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 200, 17);
    let out_dir = tmp.path().join("sens");
    let out = run(&[
        "sensitivity",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--draws",
        "800",
        "--xi",
        r#"{"family":"point","value":0.0}"#,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sensitivity.json")).unwrap())
            .unwrap();
    // a point mass at zero leaves the reweight inert
    let ess = report["reweight_ess"].as_f64().unwrap();
    assert!((ess - 800.0).abs() < 1.0, "reweight ESS {ess}");
    let mean = report["mean"].as_f64().unwrap();
    assert!((mean - 110.0).abs() < 2.0, "mean {mean}");
}

#[test]
fn malformed_xi_json_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit_data(tmp.path(), 100, 3);
    let out = run(&[
        "sensitivity",
        "--input",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--xi",
        r#"{"family":"trapezoid"}"#,
        "--out",
        tmp.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
