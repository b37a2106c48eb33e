use std::path::Path;
use std::process::{Command, Output};

use ctl_cli::run::Checkpoint;
use serde_json::Value;

fn ctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctl")).args(args).env("CTL_LOG", "error").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const SMALL_2D: &str = r#"{
    "n": 2, "p": 1.5, "ks": [2, 3], "refinement": 1,
    "lambda_schedule": [10, 30],
    "seeds": [5],
    "oracle": {"truncation_radius": 10, "resolution": 8}
}"#;

#[test]
fn validate_echoes_the_derived_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 3, "p": 2.0, "ks": [2, 3, 4]}"#);
    let out = ctl(&["validate", "--config", &cfg]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["q"], 4.0);
    assert_eq!(v["warnings"].as_array().unwrap().len(), 0);
}

#[test]
fn validate_warns_outside_the_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 3, "p": 2.5, "ks": [3]}"#);
    let out = ctl(&["validate", "--config", &cfg]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn malformed_config_exits_with_two_and_an_error_document() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in [
        "{not json",
        r#"{"n": 3, "p": 2.0}"#,
        r#"{"n": 4, "p": 2.0, "ks": [3]}"#,
        r#"{"n": 3, "p": 2.0, "ks": [1]}"#,
        r#"{"n": 3, "p": 2.0, "ks": [3], "lambda_schedule": [100, 10]}"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), body);
        let out = ctl(&["sweep", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        let v = stdout_json(&out);
        assert_eq!(v["error"], "config", "{body}");
        assert_eq!(v["exit_code"], 2);
    }
    let out = ctl(&["validate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ctl(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trace_constant_emits_oracle_and_closed_form_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"n": 3, "p": 2.0, "ks": [3], "oracle": {"truncation_radius": 10, "resolution": 8}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = ctl(&["trace-constant", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let table = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("oracle,3,2,4,"));
    assert!(lines[2].starts_with("closed_form,3,2,4,1.772454"));
    let rows: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("trace_constant.json")).unwrap()).unwrap();
    assert!(rows[1]["relative_difference"].as_f64().unwrap() < 0.02);
    assert!(out_dir.join("oracle_cache.json").exists());
}

fn sweep(cfg: &str, out: &Path, workers: &str) -> Value {
    let o = ctl(&["sweep", "--config", cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    stdout_json(&o)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn sweep_is_deterministic_resumable_and_rerenderable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_2D);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));

    let summary = sweep(&cfg, &a, "2");
    assert_eq!(summary["lambda"], 30.0);
    assert_eq!(summary["nonequivalent_count"], 2);
    for f in ["branches.csv", "traces.csv", "summary.json", "energy_vs_lambda.svg", "mass_density.svg", "peak_masses.svg"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let rows = std::fs::read_to_string(a.join("branches.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);

    // worker count does not change results
    sweep(&cfg, &b, "1");
    for f in ["branches.csv", "traces.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }

    // interrupted after the first stage of k=3, then resumed
    std::fs::create_dir_all(c.join("checkpoints")).unwrap();
    let path = Checkpoint::path(&c, 3, 5);
    let mut ckpt = Checkpoint::load(&Checkpoint::path(&a, 3, 5)).unwrap().unwrap();
    ckpt.stage = 1;
    ckpt.records.truncate(1);
    std::fs::write(&path, serde_json::to_vec(&ckpt).unwrap()).unwrap();
    sweep(&cfg, &c, "1");
    for f in ["branches.csv", "traces.csv"] {
        assert_eq!(read(&a.join(f)), read(&c.join(f)), "{f}");
    }

    // report re-renders the same tables from checkpoints
    std::fs::remove_file(a.join("branches.csv")).unwrap();
    let o = ctl(&["report", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read(&a.join("branches.csv")), read(&b.join("branches.csv")));
}

#[test]
fn report_without_checkpoints_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_2D);
    let out = ctl(&["report", "--config", &cfg, "--out", dir.path().join("none").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["error"], "runtime");
}

#[test]
fn solve_writes_one_branch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_2D);
    let out_dir = dir.path().join("out");
    let o = ctl(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--k", "3", "--lambda", "20", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let row = stdout_json(&o);
    assert_eq!(row["k"], 3);
    assert_eq!(row["seed"], 9);
    assert_eq!(row["lambda"], 20.0);
    assert!(out_dir.join("solve/branch.json").exists());
}
