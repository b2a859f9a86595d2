use std::fs;
use std::process::{Command, Output};

use osgood_wave::table::body_of;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osgood-wave"))
        .args(args)
        .env_remove("OSGOOD_WAVE_OUT")
        .env_remove("OSGOOD_WAVE_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_osgood_prints_one_row() {
    let o = run(&["check-osgood", "--drift", "x^3", "--alpha", "1", "--beta", "0.7071067811865476"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1, "{out}");
    let fields: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[0], "Finite");
    assert!(fields[2].parse::<f64>().unwrap() < 1e-7);
    let value: f64 = fields[1].parse().unwrap();
    assert!((value - 2f64.sqrt()).abs() < 1e-7, "{value}");
}

#[test]
fn ode_prints_a_path_and_a_report() {
    let o = run(&["ode", "--drift", "x^3", "--alpha", "1", "--beta", "0.7071067811865476", "--dt", "1e-3", "--tmax", "3", "--every", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("# report blew_up=true")), "{out}");
    assert_eq!(body_of(&out).lines().next(), Some("t,y"));
}

#[test]
fn unknown_recipe_is_an_error() {
    let o = run(&["recipe", "no-such-recipe"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-recipe"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "drift=x^3\nalpha=1\nbeta=1\nbogus=3\n").unwrap();
    let o = run(&["check-osgood", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn command_line_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# cubic\ndrift=x^3\nalpha=1\nbeta=5\n").unwrap();
    let a = run(&["check-osgood", "--config", cfg.to_str().unwrap(), "--beta", "0.7071067811865476"]);
    let b = run(&["check-osgood", "--drift", "x^3", "--alpha", "1", "--beta", "0.7071067811865476"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(body_of(&stdout(&a)), body_of(&stdout(&b)));
}

#[test]
fn emitted_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    let args = ["simulate", "--case", "dirichlet", "--drift", "x*logp(x)", "--u0", "exp(0-x)", "--h", "0.05", "--tmax", "0.5", "--seed", "9"];
    let mut first = args.to_vec();
    first.extend(["--emit-config", cfg.to_str().unwrap()]);
    let a = run(&first);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(b.status.success(), "{}", stderr(&b));
    assert_eq!(body_of(&stdout(&a)), body_of(&stdout(&b)));
    assert!(!body_of(&stdout(&a)).is_empty());
}

#[test]
fn recipe_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "recipe",
        "osgood-threshold-delta",
        "--set",
        "scaling_cases=3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    for f in ["osgood-threshold-delta-checks.csv", "osgood-threshold-delta-verdicts.csv", "osgood-threshold-delta-verdicts.plot"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let plot = fs::read_to_string(dir.path().join("osgood-threshold-delta-verdicts.plot")).unwrap();
    assert!(plot.contains("osgood-threshold-delta-verdicts.csv"), "{plot}");
}

#[test]
fn kernel_recipe_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "recipe",
        "kernel-identities",
        "--set",
        "cells=20000,terms=20000,series_points=5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
}
