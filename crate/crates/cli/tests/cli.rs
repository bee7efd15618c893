//! Black-box checks of the `tmyag` binary: exit codes, outputs, manifests.

use std::path::Path;
use std::process::{Command, Output};
use tmyag_core::{write_constants, MaterialConstants};

fn tmyag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmyag")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(o: &Output) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn doubled_constants(dir: &Path) -> String {
    let p = dir.join("x2.json");
    write_constants(&MaterialConstants::default_set().with_gamma_j_scaled(2.0), &p).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn version_carries_constants_hash() {
    let o = tmyag(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.starts_with(&format!("tmyag {} constants ", env!("CARGO_PKG_VERSION"))));
    assert!(line.trim_end().ends_with(&MaterialConstants::default_set().hash()));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["frobnicate"][..],
        &[],
        &["relax-rate", "--B", "lots"],
        &["hole-decay", "--rate-Hz", "1e-3", "--input", "x.csv"],
    ] {
        let o = tmyag(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let o = tmyag(&["hole-decay", "--rate-Hz", "1e-3", "--input", "x.csv"]);
    assert!(stderr(&o).starts_with("ConflictingFlags"));
}

#[test]
fn computation_errors_exit_1_with_name() {
    let o = tmyag(&["fit-relax", "--input", "/definitely/not/here.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("FileNotFound"));

    let o = tmyag(&["relax-rate", "--site", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("Unmodeled"));
}

#[test]
fn shift_vs_b_is_quadratic() {
    let o = tmyag(&["shift-vs-B", "--B-max", "3", "--B-step", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(text.starts_with("B_T,shift_1+3+5_Hz,shift_2+4+6_Hz\n"));
    let r = rows(&o);
    let at = |b: f64| -> f64 { r.iter().find(|x| x[0].parse::<f64>().unwrap() == b).unwrap()[1].parse().unwrap() };
    assert!((at(3.0) / at(1.0) - 9.0).abs() < 1e-9);
    assert!((at(3.0) / 42e9 - 1.0).abs() < 0.10);
}

#[test]
fn out_flag_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rates.csv");
    let o = tmyag(&["relax-rate", "--B", "6", "--T", "1.6", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("B_T,T_K,"));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("rates.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "relax-rate");
    assert_eq!(m["constants_hash"], MaterialConstants::default_set().hash());
}

#[test]
fn hole_decay_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let o = tmyag(&["hole-decay", "--rate-Hz", "2e-3", "--points", "12", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = tmyag(&["hole-decay", "--input", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&o);
    let t1: f64 = r[0][0].parse().unwrap();
    assert!((t1 * 2e-3 - 1.0).abs() < 1e-9);
}

#[test]
fn strict_loader_rejects_doubled_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let c = doubled_constants(dir.path());
    let o = tmyag(&["--constants", &c, "site-table"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("InvariantViolation"));
}

#[test]
fn reproduce_with_doubled_gamma_fails_only_shift_items() {
    let dir = tempfile::tempdir().unwrap();
    let c = doubled_constants(dir.path());
    let out = dir.path().join("run");
    std::fs::create_dir(&out).unwrap();
    let o = tmyag(&["--constants", &c, "reproduce-paper", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ReproductionFailed"));
    let mut r = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let status: Vec<(String, String)> = r.records().map(|x| { let x = x.unwrap(); (x[0].to_string(), x[2].to_string()) }).collect();
    for (id, s) in &status {
        let want = if ["C", "3", "4"].contains(&id.as_str()) { "FAIL" } else { "PASS" };
        assert_eq!(s, want, "item {id}");
    }
}

#[test]
fn reproduce_needs_existing_dir() {
    let o = tmyag(&["reproduce-paper", "--out-dir", "/definitely/not/here"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("FileNotFound"));
}
