use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fermatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fermatlab"))
        .args(args)
        .env_remove("FERMATLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        "{\n  \"experiment\": \"quantum_stationarity\",\n  \"epsilon_list\": [0.01]\n}\n",
    );
    let o = fermatlab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("epsilon_list"), "{err}");
    assert!(err.contains(":3:"), "diagnostic carries the line: {err}");
}

#[test]
fn quantum_stationarity_default_is_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "q.json", r#"{"experiment": "quantum_stationarity"}"#);
    let o = fermatlab(&["run", &cfg, "--output-dir", out.to_str().unwrap(), "--svg"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["status"], "agree");
    assert_eq!(report["results"]["stationarity"]["verdict"], "stationary");
    assert_eq!(report["config"]["system"]["parameters"]["dim"], 8.0);
    assert!(report["version"].is_string());

    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().next().unwrap(), "experiment,direction,mode,seed,epsilon,grid,T,dTde_2pt,dTde_4pt");
    // 3 paths x 8 directions x 4 epsilons x 4 grids
    assert_eq!(cells.lines().count(), 1 + 3 * 8 * 4 * 4);
    assert!(fs::read_to_string(out.join("paths.csv")).unwrap().starts_with("path,node,tau,re0,im0"));
    assert!(fs::read_to_string(out.join("plot.svg")).unwrap().starts_with("<svg"));

    let manifest = read_json(&out.join("MANIFEST"));
    assert_eq!(manifest["status"], "complete");
    let names: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["report.json", "cells.csv", "paths.csv", "summary.txt", "plot.svg"]);
    for f in manifest["files"].as_array().unwrap() {
        let len = fs::metadata(out.join(f["name"].as_str().unwrap())).unwrap().len();
        assert_eq!(f["bytes"].as_u64().unwrap(), len);
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn isoperimetric_expecting_consistency_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "iso.json",
        r#"{"experiment": "isoperimetric", "expect": {"constant_multiplier": "consistent"}}"#,
    );
    let o = fermatlab(&["run", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["status"], "disagree");
    let check = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "constant_multiplier").unwrap();
    assert_eq!(check["observed"], "inconsistent");
    assert_eq!(check["agrees"], false);
}

#[test]
fn report_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"experiment": "config_space"}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(fermatlab(&["run", &cfg, "--output-dir", a.to_str().unwrap()]).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_fermatlab"))
        .args(["run", &cfg, "--output-dir", b.to_str().unwrap()])
        .env("FERMATLAB_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(b.join("summary.txt")).unwrap().contains("threads: 4"));
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("cells.csv")).unwrap(), fs::read(b.join("cells.csv")).unwrap());
}

#[test]
fn seed_override_changes_the_system() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.json", r#"{"experiment": "quantum_residuals", "path": {"samples": 2}}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(fermatlab(&["run", &cfg, "--output-dir", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(fermatlab(&["run", &cfg, "--output-dir", b.to_str().unwrap(), "--seed", "5"]).status.code(), Some(0));
    let (ra, rb) = (read_json(&a.join("report.json")), read_json(&b.join("report.json")));
    assert_eq!(rb["config"]["system"]["seed"], 5);
    assert_ne!(ra["results"], rb["results"]);
}

#[test]
fn engine_failure_exits_2_and_marks_manifest_failed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "f.json", r#"{"experiment": "aa_length", "path": {"initial": {"basis": 5}}}"#);
    let o = fermatlab(&["run", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let manifest = read_json(&out.join("MANIFEST"));
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["error"].as_str().unwrap().contains("basis index 5"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn missing_config_and_bad_values_exit_2() {
    assert_eq!(fermatlab(&["run", "/nonexistent/config.json"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.json", r#"{"experiment": "aa_length"}"#);
    let o = fermatlab(&["sweep", &cfg, "--axis", "grid", "--values", "250,500"]);
    assert_eq!(o.status.code(), Some(2), "grid axis does not apply to aa_length");
    let o = fermatlab(&["sweep", &cfg, "--axis", "dimension", "--values", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fermatlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn list_prints_ten_anchored_entries_stably() {
    let a = fermatlab(&["list"]);
    let b = fermatlab(&["list"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let names: Vec<&str> = text.lines().filter(|l| !l.starts_with(' ')).collect();
    assert_eq!(names.len(), 10);
    assert_eq!(text.matches("\n  anchor: ").count(), 10);
    assert_eq!(text.matches("\n  default: {").count(), 10);
}

#[test]
fn grid_sweep_fits_second_order_on_pendulum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = write_config(
        tmp.path(),
        "p.json",
        r#"{"experiment": "classical_stationarity", "system": {"kind": "pendulum"}}"#,
    );
    let o = fermatlab(&[
        "sweep",
        &cfg,
        "--axis",
        "grid",
        "--values",
        "250,500,1000,2000",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let s = read_json(&out.join("sweep.json"));
    let orders = s["sweep"]["checks"][0]["detail"]["orders"].as_array().unwrap();
    assert_eq!(orders.len(), 6);
    for p in orders {
        let p = p.as_f64().unwrap();
        assert!((1.7..=2.3).contains(&p), "order {p}");
    }
    for g in ["250", "500", "1000", "2000"] {
        assert!(out.join(format!("grid_{g}")).join("report.json").exists());
    }
    assert_eq!(read_json(&out.join("MANIFEST"))["status"], "complete");
    let table = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(table.starts_with("report,path,direction,mode,grid_250,grid_500,grid_1000,grid_2000,fitted_order"));
}

#[test]
fn epsilon_sweep_baseline_response_is_linear() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = write_config(tmp.path(), "q.json", r#"{"experiment": "quantum_stationarity"}"#);
    let o = fermatlab(&[
        "sweep",
        &cfg,
        "--axis",
        "epsilon",
        "--values",
        "0.01,0.005,0.0025",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let s = read_json(&out.join("sweep.json"));
    let checks = s["sweep"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 2);
    for c in checks {
        assert_eq!(c["observed"], "stable");
        assert!(c["detail"]["max_relative_spread"].as_f64().unwrap() < 0.05);
    }
}

#[test]
fn dimension_sweep_stationary_at_every_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = write_config(tmp.path(), "q.json", r#"{"experiment": "quantum_stationarity"}"#);
    let o =
        fermatlab(&["sweep", &cfg, "--axis", "dimension", "--values", "4,8,16", "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    for d in ["4", "8", "16"] {
        let r = read_json(&out.join(format!("dimension_{d}")).join("report.json"));
        assert_eq!(r["results"]["stationarity"]["verdict"], "stationary", "d = {d}");
        assert_eq!(r["config"]["system"]["parameters"]["dim"].as_f64().unwrap(), d.parse::<f64>().unwrap());
    }
}
