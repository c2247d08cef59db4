use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn dioph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dioph"))
        .args(args)
        .env_remove("DIOPH_MAX_BITS")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = dioph(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON output")
}

fn temp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dioph-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn cover_sum_csv_matches_cell_count() {
    let out = dioph(&["cover-sum", "--psi", "pow:1,3", "--s", "3/2", "--t-max", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema_version: 1\n"));
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["t", "cells", "s_volume", "comparison_sum"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][1], "9");
    assert_eq!(&rows[1][1], "123");
}

#[test]
fn cover_sum_json_and_theta() {
    let v = json(&[
        "cover-sum", "--psi", "pow:1,3", "--s", "3/2", "--t-max", "2", "--theta", "1/2,1/3", "--format", "json",
    ]);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["rows"][1]["cells"], "123");
    assert_eq!(v["theta"], serde_json::json!(["1/2", "1/3"]));
}

#[test]
fn series_verdict() {
    let v = json(&["series", "--psi", "pow:1,3", "--kind", "mult-planar", "--s", "8/5"]);
    assert_eq!(v["verdict"], "Convergent");
    let v = json(&["series", "--psi", "pow:1,1", "--kind", "curve", "--s", "1/2", "--numerical"]);
    assert_eq!(v["verdict"], "Divergent");
    assert_eq!(v["numerical"]["convergent"], false);
}

#[test]
fn verify_reports_violating_denominator() {
    let v = json(&["cantor", "verify", "--x", "1/3,1/3", "--R", "11", "--i", "1/2", "--QH", "10"]);
    assert_eq!(v["violation_H"], 3);
    assert_eq!(v["passed"], false);
    assert_eq!(v["Q_I"], 1);
}

#[test]
fn count_curve_hand_cell_and_sweep() {
    let v = json(&["count-curve", "--fn", "x^2", "--interval", "0,1", "--Q", "1", "--delta", "1/4"]);
    assert_eq!(v["count"], 2);
    assert_eq!(v["Q"], 1);
    assert!(v.get("witnesses").is_none());
    let out = dioph(&["count-curve", "--Q", "32", "--delta", "1/8", "--sweep"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    assert_eq!(rdr.records().count(), 2 * 3);
}

#[test]
fn precision_cap_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_dioph"))
        .args(["count-curve", "--fn", "sqrt:1,1", "--Q", "8", "--delta", "1/4"])
        .env("DIOPH_MAX_BITS", "128")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["max_bits"], 128);
    let v = json(&["count-curve", "--fn", "sqrt:1,1", "--Q", "8", "--delta", "1/4"]);
    assert_eq!(v["max_bits"], 512);
}

#[test]
fn descend_certificate_round_trips() {
    let path = temp("descend.json");
    let p = path.to_str().unwrap();
    let args = [
        "cantor", "descend", "--theta", "1/2,1/3", "--depth", "4", "--selector", "seed", "--seed", "5", "--out", p,
    ];
    assert!(dioph(&args).status.success());
    let first = std::fs::read(&path).unwrap();
    let v: Value = serde_json::from_slice(&first).unwrap();
    for key in ["x1", "x2", "c", "c_star", "Q_H", "Q_I", "min_margin_H", "min_margin_I"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["seed"], 5);
    assert_eq!(v["passed"], true);
    assert_eq!(v["Q_H"], 14641);

    let again = json(&["cantor", "verify", "--certificate", p]);
    assert_eq!(again["matches"], true);

    assert!(dioph(&args).status.success());
    assert_eq!(std::fs::read(&path).unwrap(), first, "same seed, same bytes");

    let mut tampered = v.clone();
    tampered["x1"] = Value::from("1/3");
    std::fs::write(&path, tampered.to_string()).unwrap();
    assert_eq!(dioph(&["cantor", "verify", "--certificate", p]).status.code(), Some(2));
}

#[test]
fn build_feeds_boxdim() {
    let path = temp("tree.json");
    let p = path.to_str().unwrap();
    assert!(dioph(&["cantor", "build", "--theta", "1/2,1/3", "--depth", "1", "--out", p]).status.success());
    let tree: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(tree["leaves"], 1112);
    assert_eq!(tree["rects"].as_array().unwrap().len(), 1112);
    let v = json(&["boxdim", "--input", p, "--scales", "2^-8..2^-11"]);
    let slope = v["slope"].as_f64().unwrap();
    assert!(slope > 1.0 && slope <= 2.05, "slope {slope}");
    assert_eq!(v["table"].as_array().unwrap().len(), 4);
}

#[test]
fn boxdim_unit_square_points() {
    let path = temp("points.json");
    let pts: Vec<[f64; 2]> = (0..256)
        .flat_map(|a| (0..256).map(move |b| [(a as f64 + 0.5) / 256.0, (b as f64 + 0.5) / 256.0]))
        .collect();
    std::fs::write(&path, serde_json::json!({ "points": pts }).to_string()).unwrap();
    let v = json(&["boxdim", "--input", path.to_str().unwrap(), "--scales", "2^-2..2^-8"]);
    assert!((v["slope"].as_f64().unwrap() - 2.0).abs() < 0.05);
}

#[test]
fn config_file_supplies_defaults() {
    let cfg = temp("run.cfg");
    std::fs::write(&cfg, "# cover run\npsi = pow:1,3\ns = 8/5\nt-max = 1\nformat = json\n").unwrap();
    let c = cfg.to_str().unwrap();
    let v = json(&["cover-sum", "--config", c]);
    assert_eq!(v["s"], "8/5");
    let v = json(&["cover-sum", "--config", c, "--s", "3/2"]);
    assert_eq!(v["s"], "3/2");
}

#[test]
fn jobs_flag_does_not_change_output() {
    let args = ["cantor", "descend", "--depth", "3", "--selector", "center"];
    let serial = dioph(&[&args[..], &["--jobs", "1"]].concat());
    let default = dioph(&args);
    assert!(serial.status.success());
    assert_eq!(serial.stdout, default.stdout);
}

#[test]
fn precondition_errors_exit_one() {
    let cases: [&[&str]; 7] = [
        &["cover-sum", "--psi", "pow:1,3", "--s", "1/x", "--t-max", "1"],
        &["cover-sum", "--psi", "pow:1,3", "--s", "5/2", "--t-max", "1"],
        &["count-curve", "--Q", "4", "--delta", "3/4"],
        &["cantor", "descend", "--R", "7"],
        &["cantor", "descend", "--depth", "9"],
        &["series", "--psi", "pow:1,3", "--kind", "curve", "--s", "3/2"],
        &["series", "--psi", "pow:1,3", "--kind", "mult-planar", "--bogus"],
    ];
    for args in cases {
        let out = dioph(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn every_json_output_is_versioned() {
    let runs: [&[&str]; 3] = [
        &["s1-member", "--psi", "pow:1,3", "--depth", "3"],
        &["cantor", "build", "--depth", "1", "--summary-only"],
        &["series", "--psi", "pow:1,2", "--kind", "jarnik-1d", "--s", "1/2"],
    ];
    for args in runs {
        let v = json(args);
        assert_eq!(v["schema_version"], 1, "{args:?}");
        assert!(v.get("seed").is_some());
    }
    assert_eq!(json(runs[0])["verified"], true);
}
