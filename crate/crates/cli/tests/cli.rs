use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

fn mabeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mabeam")).args(args).output().expect("spawn mabeam")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    mabeam(&all)
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).expect("column");
    lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect()
}

fn report_value(dir: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(dir.join("report.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .expect("report key")
        .parse()
        .unwrap()
}

#[test]
fn desk_steering_run_is_fast_and_complete() {
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    let out = run_in(tmp.path(), &["run", "--preset", "desk", "--scheme", "upa-steering"]);
    let secs = start.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(secs < 5.0, "took {secs} s");
    for f in ["resolved.scenario", "trajectory.csv", "iterations.csv", "report.txt", "slots.csv", "nadir.csv", "grid_sets.csv"] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    for m in 1..=10 {
        assert!(tmp.path().join(format!("patterns/slot_{m:03}.csv")).is_file());
    }
    assert!(!tmp.path().join("FAILED").exists());
    assert!(report_value(tmp.path(), "min_gain") >= 4.0);
}

#[test]
fn ma_iteration_log_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["run", "--preset", "desk", "--scheme", "ma"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let leak: Vec<f64> = csv_column(&tmp.path().join("iterations.csv"), "leakage").iter().map(|s| s.parse().unwrap()).collect();
    assert!(leak.len() > 1);
    for w in leak.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn invalid_scheme_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["run", "--preset", "desk", "--scheme", "phased-array"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scheme"));
}

#[test]
fn compare_needs_two_schemes() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["compare", "--preset", "desk", "--schemes", "ma"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let text = mabeam::ScenarioConfig::preset(mabeam::Preset::Desk).to_toml_string().replace("[array]\n", "[array]\nwobble = 1\n");
    let path = tmp.path().join("bad.scenario");
    fs::write(&path, text).unwrap();
    let out = run_in(tmp.path(), &["orbit", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));
}

#[test]
fn unreachable_threshold_fails_with_marker() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mabeam::ScenarioConfig::preset(mabeam::Preset::Desk);
    cfg.optimizer.gain_threshold = mabeam::config::Threshold::Absolute(8.5);
    let path = tmp.path().join("greedy.scenario");
    fs::write(&path, cfg.to_toml_string()).unwrap();
    let dir = tmp.path().join("out");
    let out = run_in(&dir, &["run", "--config", path.to_str().unwrap(), "--scheme", "ma"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("FAILED").is_file());
    assert!(dir.join("resolved.scenario").is_file());
}

#[test]
fn resolved_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("a");
    assert!(run_in(&first, &["run", "--preset", "desk", "--scheme", "upa-steering"]).status.success());
    let resolved = first.join("resolved.scenario");
    let original = mabeam::ScenarioConfig::preset(mabeam::Preset::Desk);
    assert_eq!(mabeam::ScenarioConfig::load(&resolved).unwrap(), original);

    let second = tmp.path().join("b");
    assert!(run_in(&second, &["run", "--config", resolved.to_str().unwrap(), "--scheme", "upa-steering"]).status.success());
    assert_eq!(fs::read(&resolved).unwrap(), fs::read(second.join("resolved.scenario")).unwrap());
}

#[test]
fn outputs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run_in(dir, &["run", "--preset", "desk", "--scheme", "upa-optimized"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["resolved.scenario", "trajectory.csv", "iterations.csv", "report.txt", "slots.csv", "nadir.csv", "grid_sets.csv", "patterns/slot_007.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn compare_orders_schemes() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["compare", "--preset", "desk", "--schemes", "ma,lc-ma,upa-optimized"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = tmp.path().join("comparison.csv");
    let schemes = csv_column(&table, "scheme");
    assert_eq!(schemes, ["ma", "lc-ma", "upa-optimized"]);
    assert!(csv_column(&table, "status").iter().all(|s| s == "ok"));
    let leak: Vec<f64> = csv_column(&table, "leakage").iter().map(|s| s.parse().unwrap()).collect();
    let slr: Vec<f64> = csv_column(&table, "slr").iter().map(|s| s.parse().unwrap()).collect();
    assert!(leak[0] <= leak[1]);
    assert!(slr[0] > slr[2]);
    for s in &schemes {
        assert!(tmp.path().join(s).join("trajectory.csv").is_file());
    }
    assert!(tmp.path().join("comparison_timing.csv").is_file());
}

#[test]
fn orbit_dump() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["orbit", "--preset", "paper"]);
    assert!(out.status.success());
    assert_eq!(csv_column(&tmp.path().join("orbit.csv"), "slot").len(), 50);
    let summary = fs::read_to_string(tmp.path().join("orbit.txt")).unwrap();
    let t: f64 = summary.lines().find_map(|l| l.strip_prefix("interval_s = ")).unwrap().parse().unwrap();
    assert!((t - 289.56).abs() < 0.05);
}

#[test]
fn pattern_reuses_trajectory() {
    let tmp = TempDir::new().unwrap();
    let run_dir = tmp.path().join("run");
    assert!(run_in(&run_dir, &["run", "--preset", "desk", "--scheme", "upa-steering"]).status.success());
    let traj = run_dir.join("trajectory.csv");
    let out = run_in(tmp.path(), &["pattern", "--preset", "desk", "--slot", "4", "--trajectory", traj.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let single = fs::read_to_string(tmp.path().join("pattern_slot_004.csv")).unwrap();
    let from_run = fs::read_to_string(run_dir.join("patterns/slot_004.csv")).unwrap();
    let gains = |s: &str| -> Vec<f64> { s.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect() };
    for (a, b) in gains(&single).iter().zip(gains(&from_run)) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }
    assert_eq!(run_in(tmp.path(), &["pattern", "--preset", "desk", "--slot", "0"]).status.code(), Some(2));
}
