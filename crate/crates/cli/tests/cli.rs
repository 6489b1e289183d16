use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chebtrack_cli::run::load_cases;
use serde_json::Value;

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn solve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chebtrack")).arg("solve").args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SCALAR: &str = r#"{
  "q": 1, "r": 1, "t_f": 1,
  "A": [[-1]], "B": [[1]],
  "Q": [[1]], "R": [[1]],
  "x0": [1],
  "discretization": {"k": 3, "M": 4}
}"#;

#[test]
fn zero_problem_is_optimal_at_the_origin() {
    let out = tempfile::tempdir().unwrap();
    let cfg = examples().join("zero.json");
    let o = solve(&[cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--gnuplot"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["J"].as_f64().unwrap(), 0.0);
    assert_eq!(s["status"], "optimal");
    assert_eq!(s["unknowns"], 48);
    let csv = fs::read_to_string(out.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,u1,r1,r2,e"), "{}", csv.lines().next().unwrap());
    assert_eq!(csv.lines().count(), 202);
    assert!(out.path().join("plot.gp").exists());
}

#[test]
fn dumps_operational_matrices_and_qp() {
    let out = tempfile::tempdir().unwrap();
    let cfg = write_config(out.path(), "scalar.json", SCALAR);
    let dir = out.path().join("run");
    let o = solve(&[&cfg, "--out", dir.to_str().unwrap(), "--dump-opmats", "--dump-qp", "--oracle-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["P.csv", "C.csv", "E1.csv", "H.csv", "A_eq.csv", "b_eq.csv", "oracle.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let p = fs::read_to_string(dir.join("P.csv")).unwrap();
    assert_eq!(p.lines().count(), 16);
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(s["oracle"]["relative_sup"].as_f64().unwrap() < 1e-3);
}

#[test]
fn command_line_overrides_resolution() {
    let out = tempfile::tempdir().unwrap();
    let cfg = write_config(out.path(), "scalar.json", SCALAR);
    let dir = out.path().join("run");
    let o = solve(&[&cfg, "--out", dir.to_str().unwrap(), "--k", "2", "--M", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!((s["k"].as_u64(), s["M"].as_u64(), s["unknowns"].as_u64()), (Some(2), Some(6), Some(24)));
}

#[test]
fn malformed_expression_names_the_field() {
    let out = tempfile::tempdir().unwrap();
    let cfg = write_config(out.path(), "bad.json", &SCALAR.replace("\"A\": [[-1]]", "\"A\": [[\"sin(t\"]]"));
    let o = solve(&[&cfg, "--out", out.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/A/0/0"), "{err}");
}

#[test]
fn unknown_field_is_a_parse_error() {
    let out = tempfile::tempdir().unwrap();
    let cfg = write_config(out.path(), "bad.json", &SCALAR.replace("\"q\": 1", "\"q\": 1, \"bogus\": 3"));
    let o = solve(&[&cfg, "--out", out.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/bogus"));
}

#[test]
fn misaligned_delay_needs_rounding() {
    let out = tempfile::tempdir().unwrap();
    let body = SCALAR.replace(
        "\"x0\": [1]",
        "\"x0\": [1], \"f\": [1], \"delayed_state_terms\": [{\"matrix\": [[0.5]], \"delay\": 0.3}]",
    );
    let cfg = write_config(out.path(), "delay.json", &body);
    let o = solve(&[&cfg, "--out", out.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = solve(&[&cfg, "--out", out.path().join("b").to_str().unwrap(), "--round-delays"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&fs::read_to_string(out.path().join("b/summary.json")).unwrap()).unwrap();
    let r = &s["delay_rounding"][0];
    assert_eq!(r["requested"].as_f64(), Some(0.3));
    assert_eq!(r["applied"].as_f64(), Some(0.25));
}

#[test]
fn io_failures_exit_with_five() {
    let out = tempfile::tempdir().unwrap();
    let missing = out.path().join("missing.json");
    assert_eq!(solve(&[missing.to_str().unwrap()]).status.code(), Some(5));
    let cfg = write_config(out.path(), "scalar.json", SCALAR);
    let blocker = out.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = solve(&[&cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn every_golden_config_parses() {
    let mut seen = 0;
    for entry in fs::read_dir(examples()).unwrap() {
        let path = entry.unwrap().path();
        let cases = load_cases(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!cases.is_empty());
        for c in &cases {
            c.problem.validate().unwrap();
        }
        seen += 1;
    }
    assert_eq!(seen, 7);
}

#[test]
fn time_varying_entries_parse_to_the_plant() {
    let cases = load_cases(&examples().join("ex6.json")).unwrap();
    let p = &cases[0].problem;
    for t in [0.0, 0.7, 2.5] {
        assert_eq!(p.a.eval(t)[(2, 0)], f64::cos(t));
        let d = p.delayed_state[0].matrix.eval(t);
        assert_eq!(d[(1, 0)], -0.1 * t * t);
        assert_eq!(d[(2, 0)], (-t).exp());
    }
}

#[test]
fn piecewise_reference_breaks_at_one_and_two() {
    let cases = load_cases(&examples().join("ex5.json")).unwrap();
    let p = &cases[0].problem;
    // the output references sit below the four plant states
    let r = |t: f64| p.reference.eval_vec(t);
    let pi = std::f64::consts::PI;
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    close(r(0.5)[4], (2.0 * pi * 0.5).cos());
    close(r(1.5)[4], 0.5 * 1.5 * 1.5 * (1.0 - 1.5));
    close(r(2.5)[4], 0.5 * (4.0 * pi * 2.5).cos() + 1.0);
    close(r(0.999)[5], 1.2 * 0.999 * 0.999 * (1.0 - 0.999));
    close(r(1.0)[5], (2.0 * pi).cos());
    close(r(2.0)[5], 0.2 * (8.0 * pi).sin() - 0.5);
}
