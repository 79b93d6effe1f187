//! End-to-end checks of the `hartree-lab` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
grid.n = 16
grid.length = 20
family.speeds = 0, 0.1
family.mus = 0.45, 0.5, 0.55
solver.boundary_tol = 1
potential.epsilon = 0.1
initial.mu = 0.5
initial.y = 0, 0, 1
evolution.t_end = 2
evolution.dt = 0.05
";

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hartree-lab"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn frequency_below_the_essential_threshold_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}family.mus = 0.05, 0.1\n").replace("family.mus = 0.45, 0.5, 0.55\n", "");
    let out = run(dir.path(), &cfg, &["effective"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mu_l"), "stderr: {err}");
    assert!(err.contains("family.mus"), "stderr: {err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &format!("{SMALL}grid.spacing = 3\n"), &["effective"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_configs_give_identical_tables() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = run(a.path(), SMALL, &["effective"]);
    let ob = run(b.path(), SMALL, &["effective"]);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(ob.status.success(), "{}", String::from_utf8_lossy(&ob.stderr));
    let ta = std::fs::read(a.path().join("out/effective.csv")).unwrap();
    let tb = std::fs::read(b.path().join("out/effective.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}
