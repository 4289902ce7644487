//! Exit codes and outputs of the `beamtrack` binary.

use std::path::PathBuf;
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("beamtrack-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn beamtrack(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_beamtrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &PathBuf, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn short_run_succeeds_and_writes_csv() {
    let dir = scratch("ok");
    let config = write_config(&dir, r#"{"horizon": 0.06}"#);
    let out = dir.join("out");
    let o = beamtrack(&[
        "run",
        "--config",
        &config,
        "--scheme",
        "nonopt-ekf",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(out.join("tracking_nonopt_ekf_seed0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = scratch("bad");
    let config = write_config(&dir, r#"{"horizon": -1}"#);
    let o = beamtrack(&["run", "--config", &config, "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let config = write_config(&dir, r#"{"no_such_field": 1}"#);
    let o = beamtrack(&["run", "--config", &config, "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_designs_exit_with_3_only_when_strict() {
    let dir = scratch("strict");
    let config = write_config(&dir, r#"{"horizon": 0.06, "crlb_threshold": 1e-9}"#);
    let out = dir.join("out");
    let base = [
        "run",
        "--config",
        &config,
        "--scheme",
        "sdr",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(beamtrack(&base).status.code(), Some(0));
    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(beamtrack(&strict).status.code(), Some(3));
}

#[test]
fn json_export_parses() {
    let dir = scratch("json");
    let config = write_config(&dir, r#"{"horizon": 0.04}"#);
    let out = dir.join("out");
    let o = beamtrack(&[
        "run",
        "--config",
        &config,
        "--scheme",
        "feedback-ekf",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let path = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "json"))
        .expect("json output");
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(value.is_object() || value.is_array());
}
