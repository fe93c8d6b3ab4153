use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_expander-lab"));
    c.env_remove("EXPANDER_LAB_OUT");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr_error(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no json in {text}"));
    serde_json::from_str(line).unwrap()
}

fn write_xyz(path: &Path, rows: impl Iterator<Item = (f64, f64, f64, f64)>) {
    let mut s = String::from("s,x,y,z\n");
    for (t, x, y, z) in rows {
        s.push_str(&format!("{t:?},{x:?},{y:?},{z:?}\n"));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run_in(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["mz", "check", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_error(&o)["error"], "usage");
    let o = run_in(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_input_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["spectrum", "--profile", "absent.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_error(&o);
    assert_eq!(e["error"], "usage");
    assert!(e["message"].as_str().unwrap().contains("absent.csv"));
}

#[test]
fn config_rejects_unknown_keys_and_zero_threads() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"spacing": 0.02, "colour": 1}"#).unwrap();
    let o = run_in(dir.path(), &["--config", "c.json", "mz", "synthesize"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run_in(dir.path(), &["--threads", "0", "mz", "synthesize"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mz_check_on_constant_data() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("const.csv");
    // x ≡ 1, y = z = 0 meets every hypothesis for any ε
    write_xyz(&p, (0..=100).map(|i| (-10.0 + 0.1 * i as f64, 1.0, 0.0, 0.0)));
    let o = run_in(dir.path(), &["mz", "check", "--csv", "const.csv", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["hypotheses_ok"], true);
    assert_eq!(v["branch"]["kind"], "first");

    // y ≡ 1 breaks y' + y ≤ ε(x + z): reported as a verdict, not an error
    write_xyz(&p, (0..=100).map(|i| (-10.0 + 0.1 * i as f64, 1.0, 1.0, 0.0)));
    let o = run_in(dir.path(), &["mz", "check", "--csv", "const.csv", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["hypotheses_ok"], false);
    assert!(!v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn mz_rejects_bad_samples() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("neg.csv");
    write_xyz(&p, (0..=10).map(|i| (-1.0 + 0.1 * i as f64, 1.0, -0.5, 0.0)));
    let o = run_in(dir.path(), &["mz", "check", "--csv", "neg.csv", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_error(&o)["error"], "invalid_input");
}

#[test]
fn synthesize_is_deterministic_and_env_sets_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("outputs");
    for name in ["a.csv", "b.csv"] {
        let o = bin()
            .current_dir(dir.path())
            .env("EXPANDER_LAB_OUT", &out)
            .args(["--seed", "11", "mz", "synthesize", "--out", name])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(out.join("a.csv")).unwrap();
    let b = std::fs::read(out.join("b.csv")).unwrap();
    assert_eq!(a, b);
    let o = run_in(dir.path(), &["mz", "check", "--csv", out.join("a.csv").to_str().unwrap(), "--eps", "0.01"]);
    assert_eq!(stdout_json(&o)["hypotheses_ok"], true);
}

#[test]
fn expander_spectrum_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run_in(d, &["expander", "match", "--slope", "0.43", "--kind", "neck", "--out", "neck.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["found"].as_array().unwrap().len(), 2);
    let first = std::fs::read(d.join("neck.csv")).unwrap();
    run_in(d, &["expander", "match", "--slope", "0.43", "--kind", "neck", "--out", "again.csv"]);
    assert_eq!(first, std::fs::read(d.join("again.csv")).unwrap());

    let o = run_in(d, &["spectrum", "--profile", "neck.csv", "--modes", "6", "--out", "spec/spec.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["I"], 1);
    assert_eq!(v["K"], 0);
    assert!(d.join("spec/mode_006.csv").exists());
    assert!(d.join("spec/profile.csv").exists());

    let o = run_in(d, &["entropy", "check", "--spec", "spec", "--v", "mode:1:1e-3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["expansion"]["expansion_gap"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["reverse_poincare"]["pass"], true);

    let o = run_in(d, &["entropy", "check", "--spec", "spec", "--v", "mode:9:1e-3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_solution_index_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["expander", "match", "--slope", "0.5", "--kind", "neck", "--out", "p.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["error"], "hypothesis");
}
