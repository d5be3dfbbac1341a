//! End-to-end tests of the `renormtrace` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_renormtrace"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn golden_finite_rank_scenario_passes() {
    let o = run(&["run", "--scenario", scenario("lemma1_findim").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let js: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(js["pass"], true);
    assert_eq!(js["rows"].as_array().unwrap().len(), 21);
}

#[test]
fn report_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        for format in ["json", "csv"] {
            let p = dir.path().join(format!("r{k}.{format}"));
            let o = bin()
                .args(["run", "--scenario", scenario("appendix_b_suite").to_str().unwrap(), "--format", format, "--out", p.to_str().unwrap()])
                .env("RENORMTRACE_THREADS", threads)
                .output()
                .unwrap();
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            outs.push((format, std::fs::read(&p).unwrap()));
        }
    }
    assert_eq!(outs[0], outs[2]);
    assert_eq!(outs[1], outs[3]);
    let csv = String::from_utf8(outs[1].1.clone()).unwrap();
    assert!(csv.starts_with("task_id,quantity,value_re,value_im,reference,defect,tolerance,pass,note\n"));
}

fn write_scenario(dir: &tempfile::TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("s.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn malformed_literal_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_scenario(
        &dir,
        r#"{"name": "bad", "seed": 0, "mu": 0,
            "operators": {"broken": {"kind": "multiplier", "coeffs": [[1, 2, 3, 4]]}},
            "weights": {"w": {"kind": "multiplier", "coeffs": [[2, 1], [0, 1]]}},
            "tasks": [{"id": "t", "task": "heat_trace", "operator": "broken", "weight": "w", "eps": 0.1}]}"#,
    );
    let o = run(&["run", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("operators.broken"), "{}", stderr(&o));
}

#[test]
fn unknown_reference_and_unknown_field_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_scenario(
        &dir,
        r#"{"name": "bad", "seed": 0, "mu": 0,
            "weights": {"w": {"kind": "multiplier", "coeffs": [[2, 1], [0, 1]]}},
            "tasks": [{"id": "t", "task": "heat_trace", "operator": "missing", "weight": "w", "eps": 0.1}]}"#,
    );
    let o = run(&["run", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tasks[0].operator"), "{}", stderr(&o));

    let p = write_scenario(&dir, r#"{"name": "bad", "seed": 0, "mu": 0, "tasks": [{"id": "a", "task": "acs_identities", "trails": 3}]}"#);
    let o = run(&["run", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trails"), "{}", stderr(&o));
}

#[test]
fn failing_check_gives_exit_one_and_fail_fast_stops() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_scenario(
        &dir,
        r#"{"name": "strict", "seed": 0, "mu": 0,
            "operators": {"id": {"kind": "multiplier", "coeffs": [[0, 1]]}},
            "weights": {"w": {"kind": "multiplier", "coeffs": [[2, 1], [0, 1]]}},
            "tasks": [
              {"id": "wrong", "task": "heat_trace", "operator": "id", "weight": "w", "eps": 0.5, "reference": [1.0, 0.0]},
              {"id": "after", "task": "acs_identities", "trials": 10}
            ]}"#,
    );
    let o = run(&["run", "--scenario", p.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    let csv = stdout(&o);
    assert!(csv.contains("wrong,heat_trace,") && csv.contains(",false,"));
    assert!(csv.contains("\nafter,"));
    let o = run(&["run", "--scenario", p.to_str().unwrap(), "--format", "csv", "--fail-fast"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stdout(&o).contains("\nafter,"));
}

#[test]
fn sweep_aggregates_defects_and_rejects_unknown_parameters() {
    let s = scenario("lemma1_findim");
    let o = run(&["sweep", "--scenario", s.to_str().unwrap(), "--param", "tasks.curvature.fd_step", "--values", "1e-2,1e-3"]);
    // the coarse step misses the 1e-6 tolerance
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let js: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(js["runs"][0]["pass"], false);
    assert_eq!(js["runs"][1]["pass"], true);
    assert_eq!(js["runs"].as_array().unwrap().len(), 2);
    let series = js["series"].as_array().unwrap();
    let fd = series.iter().find(|s| s["quantity"] == "curvature_defect[seed=20240611]").unwrap();
    // the curvature defect is second order in the step
    let slope = fd["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.2, "slope {slope}");

    let o = run(&["sweep", "--scenario", s.to_str().unwrap(), "--param", "tasks.curvature.no_such_field", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown parameter"), "{}", stderr(&o));
}

#[test]
fn list_tasks_and_usage_errors() {
    let o = run(&["list-tasks"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("theorem3"));
    let o2 = run(&["--list-tasks"]);
    assert_eq!(stdout(&o), stdout(&o2));
    assert_eq!(run(&["run"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}
