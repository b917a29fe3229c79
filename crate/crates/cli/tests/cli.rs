use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn btw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btw")).args(args).output().expect("spawn btw")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn single_atom_file(dir: &Path) -> String {
    let path = dir.join("one.json");
    fs::write(&path, r#"{"lambda": 1, "sigma": [[1, 1]], "mu": [[1, 0.5, 1]]}"#).unwrap();
    path.to_str().unwrap().to_string()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}

const SINGLE_ATOM: f64 = 32.0 / (17.0 * std::f64::consts::PI);

#[test]
fn kernel_matches_the_closed_form() {
    let out = btw(&["kernel", "--lambda", "1", "--x", "2", "--y", "0.5", "--t", "0.3"]);
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    let (x, y, t) = (2.0f64, 0.5f64, 0.3f64);
    let exact = 4.0 * t / (std::f64::consts::PI * ((x - y).powi(2) + t * t) * ((x + y).powi(2) + t * t));
    assert!(close(v, exact, 1e-12), "{v} vs {exact}");
}

#[test]
fn invalid_lambda_is_an_error() {
    let out = btw(&["kernel", "--lambda", "-1", "--x", "1", "--y", "1", "--t", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn whitney_of_the_unit_interval() {
    let v = stdout_json(&btw(&["whitney", "--omega", "0,1", "--min-level", "-4"]));
    let cells: Vec<(f64, f64)> = v["intervals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["a"].as_f64().unwrap(), c["b"].as_f64().unwrap()))
        .collect();
    assert_eq!(cells, vec![(0.0, 0.5), (0.5, 0.75), (0.75, 0.875), (0.875, 0.9375)]);
    assert_eq!(v["uncovered_tail"], 0.0625);
    assert_eq!(v["report"]["disjoint"], true);
    assert!(v["report"]["overlap"].as_u64().unwrap() <= 4);
}

#[test]
fn testing_and_norm_on_one_atom() {
    let dir = tempfile::tempdir().unwrap();
    let input = single_atom_file(dir.path());
    for shifted in [false, true] {
        let mut args = vec!["testing", "--input", input.as_str()];
        if shifted {
            args.push("--shift-thirds");
        }
        let v = stdout_json(&btw(&args));
        for key in ["F", "B", "N"] {
            assert!(close(v[key].as_f64().unwrap(), SINGLE_ATOM, 1e-12), "{key}: {v}");
        }
        assert!(close(v["ratio"].as_f64().unwrap(), 0.5, 1e-12));
    }
    let v = stdout_json(&btw(&["norm", "--input", &input]));
    assert!(close(v["value"].as_f64().unwrap(), SINGLE_ATOM, 1e-12));
    assert_eq!(v["converged"], true);
}

#[test]
fn malformed_input_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"lambda": 1, "sigma": [[1, 1]], "mu": [[1, 0, 1]]}"#).unwrap();
    let out = btw(&["norm", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu[0][1]"));
}

#[test]
fn verify_writes_a_deterministic_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let out_path = dir.path().join(format!("report-{tag}.json"));
        let csv_path = dir.path().join(format!("summary-{tag}.csv"));
        let out = btw(&[
            "verify",
            "--seed",
            "1",
            "--instances",
            "3",
            "--lambda",
            "0.5,1",
            "--n-sigma",
            "6",
            "--n-mu",
            "6",
            "--out",
            out_path.to_str().unwrap(),
            "--csv",
            csv_path.to_str().unwrap(),
        ]);
        let code = out.status.code();
        let report = fs::read(out_path).unwrap();
        let v: Value = serde_json::from_slice(&report).unwrap();
        let clean = v["failures"].as_array().unwrap().is_empty();
        assert_eq!(code, Some(if clean { 0 } else { 1 }));
        (report, fs::read_to_string(csv_path).unwrap())
    };
    let (report, csv) = run("a");
    let (again, _) = run("b");
    assert_eq!(report, again);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance,lambda,N,F,B,ratio,max_principle_ok,weak11_ok,carleson_C,whitney_overlap"
    );
    assert_eq!(lines.count(), 6);
    let v: Value = serde_json::from_slice(&report).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 6);
    assert_eq!(v["config"]["seed"], 1);
}

#[test]
fn verify_exit_code_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // any point of Ω near a boundary lies in two triples, so a bound of 1 fails
    fs::write(&cfg, r#"{"overlap_bound": 1, "n_sigma": 4, "n_mu": 4}"#).unwrap();
    let out = btw(&["verify", "--config", cfg.to_str().unwrap(), "--instances", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["failures"].as_u64().unwrap() >= 1);
    assert_eq!(v["failed_checks"][0]["check"], "whitney-overlap");
}

#[test]
fn decompose_generated_and_file_instances() {
    let v = stdout_json(&btw(&["decompose", "--seed", "2", "--index", "1", "--n-sigma", "6", "--n-mu", "6"]));
    assert_eq!(v["report"]["conservation_ok"], true);
    assert_eq!(v["source"]["index"], 1);

    let dir = tempfile::tempdir().unwrap();
    let input = single_atom_file(dir.path());
    let v = stdout_json(&btw(&["decompose", "--input", &input]));
    assert_eq!(v["phi"], serde_json::json!([1.0]));
    let r = &v["report"];
    assert_eq!(r["conservation_ok"], true);
    let parts = r["a_term"].as_f64().unwrap() + r["b_term"].as_f64().unwrap() + r["unassigned"].as_f64().unwrap();
    assert!(close(parts, r["shifted_sum"].as_f64().unwrap(), 1e-12), "{r}");
}
