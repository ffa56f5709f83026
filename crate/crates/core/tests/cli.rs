mod common;

use std::fs;
use std::process::{Command, Output};

fn adcons(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adcons"))
        .args(args)
        .env_remove("ADCONS_SCENARIO_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = adcons(&["synth", "example1", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(adcons(&[]).status.code(), Some(2));
    assert_eq!(adcons(&["reproduce", "example3"]).status.code(), Some(2));
}

#[test]
fn conflicting_design_flags_rejected() {
    let o = adcons(&["synth", "example1", "--gamma", "2", "--eps", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_writes_gain_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gains");
    let o = adcons(&["synth", "example1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("K_u"));
    for f in ["ku.csv", "kw.csv", "certificate.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let ku = adcons::export::read_matrix_csv(out.join("ku.csv")).unwrap();
    let kw = adcons::export::read_matrix_csv(out.join("kw.csv")).unwrap();
    assert_eq!((ku.nrows(), ku.ncols()), (1, 4));
    assert!((kw - ku.transpose() * &ku).amax() < 1e-11);
}

#[test]
fn unstabilizable_plant_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, common::UNSTABILIZABLE).unwrap();
    let o = adcons(&["synth", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("no stabilizing solution"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn simulate_unstabilizable_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, common::UNSTABILIZABLE).unwrap();
    let csv = dir.path().join("t.csv");
    let o = adcons(&[
        "simulate",
        path.to_str().unwrap(),
        "-o",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("no stabilizing solution"),
        "{}",
        stderr(&o)
    );
    assert!(!csv.exists());
}

#[test]
fn reproduce_is_deterministic() {
    let a = adcons(&["reproduce", "example1"]);
    let b = adcons(&["reproduce", "example1"]);
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("K_u"));
}

#[test]
fn invalid_scenario_lists_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = common::SMALL.replace(
        "q = [[1.0, 0.0], [0.0, 1.0]]",
        "q = [[-1.0, 0.0], [0.0, 1.0]]",
    );
    fs::write(&path, text).unwrap();
    let o = adcons(&["synth", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("performance.q"), "{}", stderr(&o));
}

#[test]
fn simulate_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("small.toml");
    fs::write(&scen, common::SMALL).unwrap();
    let csv = dir.path().join("trace.csv");
    let o = adcons(&[
        "simulate",
        scen.to_str().unwrap(),
        "-o",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(csv.is_file() && dir.path().join("trace.meta").is_file());
    let summary = fs::read_to_string(dir.path().join("trace.summary.txt")).unwrap();
    assert!(summary.contains("J_x ≤ J*"));

    let first = adcons(&["verify", csv.to_str().unwrap()]);
    let second = adcons(&["verify", csv.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0), "{}", stdout(&first));
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn simulate_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("small.toml");
    fs::write(&scen, common::SMALL).unwrap();
    let csv = dir.path().join("trace.csv");
    let o = adcons(&[
        "simulate",
        scen.to_str().unwrap(),
        "-o",
        csv.to_str().unwrap(),
        "--horizon",
        "0.5",
        "--step",
        "0.05",
        "--seed",
        "11",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = adcons::export::import_trace(&csv).unwrap();
    assert_eq!(trace.samples.len(), 11);
    assert_eq!(trace.seed, Some(11));

    let bad = adcons(&[
        "simulate",
        scen.to_str().unwrap(),
        "-o",
        csv.to_str().unwrap(),
        "--step=-1",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn verify_missing_file_exits_one() {
    let o = adcons(&["verify", "/nonexistent/trace.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reproduce_prints_table() {
    let o = adcons(&["reproduce", "example2"]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    let text = stdout(&o);
    assert!(text.contains("PASS") || text.contains("FAIL"));
}

#[test]
fn scenario_dir_lookup() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), common::SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_adcons"))
        .args(["synth", "small"])
        .env("ADCONS_SCENARIO_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let missing = adcons(&["synth", "small"]);
    assert_eq!(missing.status.code(), Some(1));
}
