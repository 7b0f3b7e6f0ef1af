use std::path::Path;
use std::process::{Command, Output};

fn sprox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sprox"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, horizon: usize, extra: &str) -> std::path::PathBuf {
    let out = dir.join("trace.csv");
    let text = format!(
        r#"
name = "cli"
seed = 4
repetitions = 2
horizon = {horizon}
output = "{}"
{extra}
[problem]
kind = "quadratic"
dim = 3
cond = 5.0

[reference]
structure = "aniso"
kind = "barrier"
epsilon = 0.5

[constraint]
kind = "l2_ball"
radius = 1.0

[noise]
kind = "gaussian"
sigma = 0.3

[mode]
kind = "polyak"
gamma_bar = 0.5
"#,
        out.display()
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_passes() {
    let out = sprox(&["validate", "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn polar_fit_csv_columns() {
    let out = sprox(&["polar-fit", "--eps", "3e-4", "--kappa", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,poly,preconditioner,sign"));
    assert_eq!(lines.count(), 2001);
}

#[test]
fn polar_fit_rejects_bad_parameters() {
    assert_eq!(sprox(&["polar-fit", "--eps", "-1"]).status.code(), Some(2));
    assert_eq!(sprox(&["polar-fit", "--schedule", "/no/such/file"]).status.code(), Some(2));
}

#[test]
fn rates_prints_slope() {
    let out = sprox(&["rates", "--mode", "storm", "--horizons", "8,16,32,64", "--repetitions", "10", "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("slope "), "{text}");
}

#[test]
fn rates_needs_enough_horizons() {
    let out = sprox(&["rates", "--horizons", "8,16", "--repetitions", "10"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_one_row_per_run_at_zero_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0, "");
    let out = sprox(&["run", "--config", cfg.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "run_id,k,F,gap_bregman,step_norm,gamma_k,alpha_k");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,0,") && lines[2].starts_with("1,0,"));
    assert!(dir.path().join("trace_summary.csv").exists());
}

#[test]
fn run_is_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 30, "");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = sprox(&["run", "--config", cfg.to_str().unwrap(), "--out", p.to_str().unwrap(), "--quiet"]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.csv");
    sprox(&["run", "--config", cfg.to_str().unwrap(), "--seed", "99", "--out", c.to_str().unwrap()]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 5, "bogus_field = 1");
    let out = sprox(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_field"));
    assert_eq!(sprox(&["run"]).status.code(), Some(2));
    assert_eq!(sprox(&["run", "--config", "/no/such/file.toml"]).status.code(), Some(2));
}

#[test]
fn infeasible_start_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 5, "x0 = [3.0, 0.0, 0.0]");
    assert_eq!(sprox(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unknown_flag_prints_usage() {
    let out = sprox(&["validate", "--frobnicate"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn prox_check_small() {
    let out = sprox(&["prox-check", "--instances", "5", "--candidates", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).lines().all(|l| l.starts_with("PASS")));
}
