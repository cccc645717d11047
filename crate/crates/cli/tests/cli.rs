use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wolbachia"))
        .args(args)
        .env("WOLBACHIA_OUTPUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn equilibria_prints_table() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["equilibria", "--strain", "wmel"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("4591.76"), "{text}");
    let s = summary(dir.path(), "equilibria");
    assert_eq!(s["command"], "equilibria");
    assert!(run(dir.path(), &["equilibria", "--strain", "wmelpop"]).status.success());
}

#[test]
fn unknown_strain_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["equilibria", "--strain", "wfoo"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown strain"));
}

#[test]
fn bad_override_and_config_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["equilibria", "--set", "eta"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["equilibria", "--set", "bogus=1"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 3\n").unwrap();
    assert_eq!(run(dir.path(), &["equilibria", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn empty_schedule_is_not_an_error() {
    let dir = TempDir::new().unwrap();
    let sched = dir.path().join("empty.csv");
    std::fs::write(&sched, "day,size\n").unwrap();
    let out = run(dir.path(), &["simulate", "--strain", "wmel", "--schedule", sched.to_str().unwrap(), "--t-end", "30"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let s = summary(dir.path(), "simulate");
    assert_eq!(s["result"]["feasible"], false);
    assert!(s["result"]["basin_entry_time"].is_null());
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn malformed_schedule_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let sched = dir.path().join("bad.csv");
    std::fs::write(&sched, "day,size\n1,10\n2,x\n").unwrap();
    let out = run(dir.path(), &["simulate", "--schedule", sched.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn impulsive_needs_a_control_file() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["impulsive", "--strain", "wmel"]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(run(dir.path(), &["impulsive", "--control", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn ocp_then_impulsive_then_simulate() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["ocp", "--strain", "wmel"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let s = summary(dir.path(), "ocp");
    let t_star = s["result"]["t_star"].as_f64().unwrap();
    assert!((t_star - 13.73).abs() < 0.05, "{t_star}");
    assert_eq!(s["result"]["converged"], true);
    let control = dir.path().join("control.csv");
    assert!(control.exists());

    let out = run(dir.path(), &["impulsive", "--strain", "wmel", "--frequency", "7", "--control", control.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let sched = dir.path().join("schedule_m7.csv");
    let rows = std::fs::read_to_string(&sched).unwrap().lines().count() - 1;
    assert_eq!(rows, 2);

    let out = run(dir.path(), &["simulate", "--strain", "wmel", "--schedule", sched.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(summary(dir.path(), "simulate")["result"]["feasible"], true);
}

#[test]
fn insufficient_capacity_is_a_run_failure() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["ocp", "--strain", "wmel", "--cap-l", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("infeasible"));
}

#[test]
fn phase_portrait_grid() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["phase", "--strain", "wmel"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = std::fs::read_to_string(dir.path().join("phase.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 2500);
    let s = summary(dir.path(), "phase");
    assert_eq!(s["result"]["probes_agree"], true);
    assert!(dir.path().join("separatrix.csv").exists());
}

#[test]
fn summaries_are_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        assert!(run(d.path(), &["ga", "--strain", "wmelpop", "--frequency", "14", "--seed", "7"]).status.success());
    }
    let read = |d: &TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    for f in ["ga.json", "ga_plan_p14.csv", "ga_history_p14.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let s = summary(a.path(), "ga");
    assert_eq!(s["seed"], 7);
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn config_file_and_flags_layer() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "strain = \"wmelpop\"\nseed = 11\n\n[params]\neta = 0.99\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert!(run(dir.path(), &["equilibria", "--config", c]).status.success());
    let s = summary(dir.path(), "equilibria");
    assert_eq!(s["seed"], 11);
    assert_eq!(s["scenario"]["strain"]["eta"], 0.99);
    let h1 = s["config_hash"].clone();

    assert!(run(dir.path(), &["equilibria", "--config", c, "--seed", "12", "--set", "eta=0.95"]).status.success());
    let s = summary(dir.path(), "equilibria");
    assert_eq!(s["seed"], 12);
    assert_eq!(s["scenario"]["strain"]["eta"], 0.95);
    assert_ne!(s["config_hash"], h1);
}

#[test]
fn reproduce_flag_must_match_command() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["ga", "--reproduce", "table2"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["ga", "--reproduce", "table4", "--seeds", "0"]).status.code(), Some(2));
}
