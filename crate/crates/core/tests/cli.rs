use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SHORT: &str = r#"{
  "scenario": { "kind": "Straight", "length": 12 },
  "robots": [{}, {}],
  "controller": "dmpc"
}"#;

const OFF_CORRIDOR: &str = r#"{
  "scenario": { "kind": "Straight", "length": 30, "corridor_half_width": 0.1 },
  "robots": [{ "loc_bias": { "x": 0.0, "y": 0.7, "theta": 0.0 } }, {}]
}"#;

fn convoy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convoy")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_log_and_metrics() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SHORT);
    let out = dir.path().join("out");
    let o = convoy(&["run", "--config", &cfg, "--seed", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("time_s,x_0,y_0,theta_0"));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["rmse_cm"].as_f64().unwrap() >= 0.0);
}

#[test]
fn malformed_config_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", "{ \"robots\": ");
    let o = convoy(&["run", "--config", &cfg, "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn invalid_spacing_bounds_exit_with_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SHORT);
    let o = convoy(&["run", "--config", &cfg, "--out", s(&dir.path().join("out")), "--set", "d_min=1.8"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_override_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SHORT);
    let o = convoy(&["run", "--config", &cfg, "--out", s(&dir.path().join("out")), "--set", "no_such_key=3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corridor_exit_aborts_and_keeps_partial_log() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", OFF_CORRIDOR);
    let out = dir.path().join("out");
    let o = convoy(&["run", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    assert!(!out.join("metrics.json").exists());
}

#[test]
fn empty_sweep_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SHORT);
    let o = convoy(&["sweep", "--config", &cfg, "--key", "v_des", "--values", "", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_summary_row_per_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SHORT);
    let out = dir.path().join("o");
    let o = convoy(&["sweep", "--config", &cfg, "--key", "v_des", "--values", "0.5,0.7", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("value,rmse_cm,max_err_cm"));
}

#[test]
fn compare_of_one_controller_matches_a_plain_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SHORT);
    let cmp = dir.path().join("cmp");
    let run = dir.path().join("run");
    let o = convoy(&[
        "compare",
        "--config",
        &cfg,
        "--controllers",
        "dmpc",
        "--trials",
        "1",
        "--seed",
        "9",
        "--out",
        s(&cmp),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = convoy(&["run", "--config", &cfg, "--seed", "9", "--out", s(&run)]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["trajectory.csv", "metrics.json"] {
        assert_eq!(fs::read(cmp.join("dmpc/seed_9").join(f)).unwrap(), fs::read(run.join(f)).unwrap(), "{f}");
    }
    assert!(cmp.join("comparison.json").exists());
    assert!(fs::read_to_string(cmp.join("comparison.txt")).unwrap().contains("DMPC"));
}

#[test]
fn unknown_controller_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", SHORT);
    let o = convoy(&["compare", "--config", &cfg, "--controllers", "lqr", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}
