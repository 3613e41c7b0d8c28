//! Runs the built binary and checks exit codes and written files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ethical-fibers"));
    c.env("RUST_LOG", "error");
    c
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn with_config(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = std::fs::read_to_string(example(name)).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut doc);
    let path = dir.join(name);
    std::fs::write(&path, doc.to_string()).unwrap();
    path
}

#[test]
fn check_topology_passes_and_writes_manifest() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "check-topology",
        "--config",
        example("slavery.cfg").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("topology.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("axioms,,true,8,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "check-topology");
    assert_eq!(manifest["seed"], 1807);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn broken_family_is_a_verification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), "slavery.cfg", |d| {
        d["topology"] = serde_json::json!({"family": [[], ["y1"], ["y2"], ["y1", "y2", "y3"]]});
    });
    let o = run(&[
        "check-topology",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("union"));
}

#[test]
fn zero_tolerance_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), "slavery.cfg", |d| {
        d["solver"] = serde_json::json!({"tol": 0.0});
    });
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tol"));
}

#[test]
fn unknown_good_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), "slavery.cfg", |d| {
        d["economy"]["agents"][0]["endowment"]["coffee"] = serde_json::json!(1.0);
    });
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("coffee"));
}

#[test]
fn exhausted_iterations_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), "slavery.cfg", |d| {
        d["solver"] = serde_json::json!({"max_iter": 2});
    });
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = run(&["solve", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn solve_symmetric_economy() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "solve",
        "--config",
        example("symmetric.cfg").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.path().join("solve.csv")).unwrap();
    let bread: f64 = csv
        .lines()
        .find(|l| l.starts_with("y,price,,bread,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((bread - 1.0).abs() < 1e-8);
}

#[test]
fn sugar_reports_critical_mass() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "scenario",
        "sugar",
        "--config",
        example("sugar.cfg").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--estimate-critical-mass",
    ]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.path().join("sugar.csv")).unwrap();
    let mut rows = csv.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = header
        .iter()
        .position(|h| *h == "phi_star")
        .expect("phi_star column");
    let phi: f64 = rows.next().unwrap().split(',').nth(col).unwrap().parse().unwrap();
    assert!((phi - 0.075).abs() <= 0.02, "{phi}");
    assert!(out.path().join("sugar.svg").exists());
}

#[test]
fn trace_writes_tables_and_chart() {
    let out = tempfile::tempdir().unwrap();
    let svg = out.path().join("figure.svg");
    let o = run(&[
        "trace",
        "--config",
        example("slavery.cfg").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    for f in [
        "trace.csv",
        "trace_summary.csv",
        "trace_volumes.csv",
        "manifest.json",
    ] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn check_preferences_on_relation_file() {
    let o = run(&[
        "check-preferences",
        "--relation",
        example("relation.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("transitivity,true"));
}

#[test]
fn sweep_and_veblen_run() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep",
        "--config",
        example("slavery.cfg").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--fiber",
        "y1",
        "--steps",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read_to_string(out.path().join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    let o = run(&[
        "scenario",
        "veblen",
        "--config",
        example("veblen.cfg").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let segments = std::fs::read_to_string(out.path().join("veblen_segments.csv")).unwrap();
    assert!(segments.lines().count() >= 2);
}
