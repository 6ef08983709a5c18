//! End-to-end runs of the `cableqsim` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cableqsim_cli::{parse_grid, parse_pair, parse_range, run_args};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn cableqsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cableqsim"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CABLEQSIM_THREADS")
        .output()
        .unwrap()
}

fn error_line(o: &Output) -> Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    let line = text.lines().last().unwrap();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{line:?}: {e}"))
}

#[test]
fn grids_and_pairs_parse() {
    assert_eq!(parse_grid("1:2:0.5").unwrap(), vec![1.0, 1.5, 2.0]);
    assert_eq!(parse_grid("4.7").unwrap(), vec![4.7]);
    assert_eq!(parse_grid("4.6:4.8:0.1").unwrap().len(), 3);
    assert!(parse_grid("2:1:0.1").is_err());
    assert!(parse_grid("1:2:0").is_err());
    assert!(parse_grid("1:x:0.1").is_err());
    assert_eq!(parse_range("4.68:4.74").unwrap(), (4.68, 4.74));
    assert!(parse_range("4.74:4.68").is_err());
    assert_eq!(parse_pair("4.684,4.738").unwrap(), (4.684, 4.738));
    assert!(parse_pair("4.684").is_err());
}

#[test]
fn usage_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cableqsim(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(cableqsim(dir.path(), &["zz-map", "--f1", "4.6:4.8:0.1"]).status.code(), Some(2));

    let o = cableqsim(dir.path(), &["zz-map", "--f1", "4.8:4.6:0.1", "--f2", "4.7"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "config");

    let o = cableqsim(dir.path(), &["--coupling", "sideways", "zz-free"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "config");
}

#[test]
fn missing_params_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cableqsim(dir.path(), &["--params", "/nonexistent/params.json", "zz-free"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "config");
}

#[test]
fn computation_failures_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    // No ZZ sign change this far below the modes.
    let o = cableqsim(dir.path(), &["zz-free", "--bracket", "4.20:4.25"]);
    assert_eq!(o.status.code(), Some(1));
    let err = error_line(&o);
    assert_ne!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().len() > 0);
}

#[test]
fn zz_free_point_lies_between_the_modes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cableqsim(dir.path(), &["zz-free"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!((4.70..=4.72).contains(&f), "{f}");
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("zz_free.json")).unwrap()).unwrap();
    assert_eq!(report["header"]["command"], "zz-free");
}

#[test]
fn outputs_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = cableqsim(dir.path(), &["zz-map", "--f1", "4.66:4.70:0.02", "--f2", "4.72:4.76:0.02"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_sha256"].as_str().unwrap();
    let recomputed = hex::encode(Sha256::digest(serde_json::to_string(&manifest["config"]).unwrap().as_bytes()));
    assert_eq!(hash, recomputed);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|f| f == "zz_map.csv"));

    let csv = fs::read_to_string(dir.path().join("zz_map.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# cableqsim zz-map "));
    assert_eq!(lines.next().unwrap(), format!("# config_sha256 {hash}"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + 9);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let read = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = cableqsim(dir.path(), &["--threads", threads, "zz-map", "--f1", "4.64:4.72:0.02", "--f2", "4.70:4.78:0.02"]);
        assert!(o.status.success());
        (fs::read(dir.path().join("zz_map.csv")).unwrap(), fs::read(dir.path().join("manifest.json")).unwrap())
    };
    assert_eq!(read("1"), read("4"));
}

#[test]
fn spectrum_and_waveform_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let files = run_args(["cableqsim", "--out", out, "spectrum", "--f1", "4.60:4.80:0.05", "--levels", "6"]).unwrap();
    assert!(files.iter().any(|f| f.ends_with("spectrum.csv")));
    let files = run_args([
        "cableqsim", "--out", out, "waveform", "--gate", "cz", "--schedule", "slepian", "--idle", "4.665,4.758", "--int",
        "4.537,4.75",
    ])
    .unwrap();
    let csv = fs::read_to_string(files.iter().find(|f| f.ends_with("waveform.csv")).unwrap()).unwrap();
    let first = csv.lines().find(|l| !l.starts_with('#') && !l.starts_with("t")).unwrap();
    assert!(first.contains("4.665"), "{first}");
}
