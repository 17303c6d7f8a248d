//! The `featcon` binary: exit codes and output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn featcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featcon")).args(args).output().unwrap()
}

fn small_run(out: &Path, k: &str, extra: &[&str]) -> Output {
    let iris = data("iris.csv");
    let mut args = vec![
        "run",
        "--data",
        &iris,
        "--task",
        "classification",
        "--k",
        k,
        "--pop",
        "20",
        "--budget",
        "100",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    featcon(&args)
}

#[test]
fn missing_data_flag_is_a_usage_error() {
    let out = featcon(&["run", "--task", "classification"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_search_is_a_usage_error() {
    let iris = data("iris.csv");
    let out = featcon(&["run", "--data", &iris, "--task", "classification", "--search", "hill"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = featcon(&[
        "run",
        "--data",
        "/nonexistent/file.csv",
        "--task",
        "regression",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = small_run(&out, "2", &["--repeats", "2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["results.jsonl", "expressions.txt", "summary.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let results = std::fs::read_to_string(out.join("results.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = results.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["seed"], 7);
    assert_eq!(lines[1]["seed"], 8);
    assert_eq!(lines[0]["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(lines[0]["config"]["search"], "gomea-rt");

    // Header plus one line per run and round.
    let expressions = std::fs::read_to_string(out.join("expressions.txt")).unwrap();
    assert_eq!(expressions.lines().count(), 1 + 2 * 2);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["dataset"]["rows"], 150);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    assert!(manifest["dataset"]["content_hash"].as_str().unwrap().len() >= 16);
}

#[test]
fn small_linkage_tree_population_warns() {
    let dir = tempfile::tempdir().unwrap();
    let res = small_run(&dir.path().join("lt"), "1", &["--search", "gomea-lt"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
}

#[test]
fn grid_export_needs_two_features() {
    let dir = tempfile::tempdir().unwrap();
    let out: PathBuf = dir.path().join("g");
    let res = small_run(&out, "1", &["--export-grid", "10"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("two constructed features"));
}

#[test]
fn classification_grid_holds_class_ids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let res = small_run(&out, "2", &["--export-grid", "4"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let grid = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("axis1,axis2,prediction"));
    let cells: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(cells.len(), 16);
    assert!(cells.iter().all(|c| [0.0, 1.0, 2.0].contains(c)));
    let points = std::fs::read_to_string(out.join("points.csv")).unwrap();
    assert_eq!(points.lines().count(), 151);
}
