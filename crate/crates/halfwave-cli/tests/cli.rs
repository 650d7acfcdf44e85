use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halfwave")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["ground", "--help"])), 0);
    assert_eq!(code(&run(&["ground", "--bogus"])), 2);
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn constants_report() {
    let out = run(&["constants"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let a_star = v["constants"]["a_star"].as_f64().unwrap();
    assert!((a_star - 1.5096).abs() < 1e-3, "{a_star}");
    assert_eq!(v["config"]["n"], 256);
    assert_eq!(v["config"]["a_from_a_star"], true);
}

#[test]
fn out_of_range_parameters_are_usage_errors() {
    let out = run(&["ground", "--q", "3.5"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("q must lie in (2, 3) for N = 2"));
    assert_eq!(code(&run(&["ground", "--n", "31"])), 2);
    assert_eq!(code(&run(&["ground", "--mu", "-1"])), 2);
    assert_eq!(code(&run(&["ground", "--seed-file", "/nonexistent/u.hwf"])), 2);
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nq = 2.4\nmu = 0.5\nn = 32\n").unwrap();
    let c = cfg.to_str().unwrap();
    let v = json(&run(&["constants", "--config", c, "--q", "2.3"]));
    assert_eq!(v["config"]["problem"]["q"], 2.3);
    assert_eq!(v["config"]["problem"]["mu"], 0.5);
    assert_eq!(v["config"]["n"], 32);
    std::fs::write(&cfg, "frobnicate = 1\n").unwrap();
    assert_eq!(code(&run(&["constants", "--config", c])), 2);
}

#[test]
fn ground_field_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.hwf");
    let p = path.to_str().unwrap();
    let out = run(&["ground", "--n", "128", "--out", p]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = json(&out);
    assert!(path.is_file());
    let sidecar = halfwave::io::sidecar_path(&path);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(meta["format"], "HWF1");
    assert_eq!(meta["n"], 128);
    let u = halfwave::io::read_field(&path).unwrap();
    assert_eq!(u.grid().points_per_dim(), 128);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(halfwave::io::encode(&u), bytes);

    let again = dir.path().join("v.hwf");
    let out = run(&["ground", "--n", "128", "--seed-file", p, "--out", again.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let second = json(&out);
    let its = |v: &Value| v["result"]["iterations"].as_u64().unwrap();
    assert!(its(&second) < its(&first), "{} vs {}", its(&second), its(&first));
    let e = |v: &Value| v["result"]["energy"].as_f64().unwrap();
    assert!((e(&second) - e(&first)).abs() < 1e-8 * e(&first).abs());
}

#[test]
fn seed_file_grid_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.hwf");
    let p = path.to_str().unwrap();
    assert_eq!(code(&run(&["ground", "--n", "128", "--out", p])), 0);
    assert_eq!(code(&run(&["ground", "--n", "64", "--seed-file", p])), 2);
}

#[test]
fn sweep_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let out = run(&["m-structure", "--n", "64", "--L", "40", "--out", path.to_str().unwrap()]);
    assert!(Path::new(&path).is_file(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("a,"));
    assert!(matches!(code(&out), 0 | 1));
}

#[test]
fn mountain_pass_reports_an_unconstructible_path() {
    let out = run(&["mp-bound", "--n", "64"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v.to_string().contains("path_constructible"));
}
