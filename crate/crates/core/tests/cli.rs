use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use alrisk::harness::results::import_results;

fn alrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alrisk")).args(args).output().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_BIAS: &str = "experiment = \"bias_fixed_function\"\ntrajectories = 20\nm_grid = [5, 10]\n";

#[test]
fn bias_run_then_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_BIAS);
    let csv = dir.path().join("out.csv");
    let json = dir.path().join("out.json");
    let back = dir.path().join("back.csv");

    let run = alrisk(&["bias", "--config", &cfg, "--seed", "5", "--out", csv.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let first = std::fs::read_to_string(&csv).unwrap();
    assert!(first.starts_with("experiment,estimator,M,trajectory,value,bias,reference,seed\n"));

    assert!(alrisk(&["export", csv.to_str().unwrap(), "--out", json.to_str().unwrap()]).status.success());
    assert!(alrisk(&["export", json.to_str().unwrap(), "--out", back.to_str().unwrap()]).status.success());
    assert_eq!(import_results(&csv, None).unwrap().rows, import_results(&json, None).unwrap().rows);
    assert_eq!(first, std::fs::read_to_string(&back).unwrap());
}

#[test]
fn seed_and_workers_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_BIAS);
    let a = alrisk(&["bias", "--config", &cfg, "--seed", "1", "--workers", "1"]);
    let b = alrisk(&["bias", "--config", &cfg, "--seed", "1", "--workers", "3"]);
    let c = alrisk(&["bias", "--config", &cfg, "--seed", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn json_format_flag() {
    let out = alrisk(&["bias", "--config", config("bias.toml").to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["config"]["experiment"], "bias_fixed_function");
    assert_eq!(value["rows"].as_array().unwrap().len(), 3 * 10 * 1000);
}

#[test]
fn oracle_grid_exits_zero() {
    let out = alrisk(&["oracle", "--config", config("oracle.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("case,pool_size,proposal,M,check"));
}

#[test]
fn configuration_errors_exit_one() {
    assert_eq!(alrisk(&["bias", "--config", "/nonexistent/run.toml"]).status.code(), Some(1));
    assert_eq!(alrisk(&["bias", "--bogus"]).status.code(), Some(1));
    assert_eq!(alrisk(&["train", "--config", config("bias.toml").to_str().unwrap()]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"bias_fixed_function\"\nm_grid = [500]\n");
    assert_eq!(alrisk(&["bias", "--config", &cfg]).status.code(), Some(1));
}
