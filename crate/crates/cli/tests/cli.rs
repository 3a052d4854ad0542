use std::path::Path;
use std::process::{Command, Stdio};

use serde_json::Value;

use tracerflow::config::{ConfigError, ExperimentConfig, OutputFormat};
use tracerflow::output::body_of;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tracerflow"));
    cmd.stderr(Stdio::null());
    cmd
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = ExperimentConfig::parse(r#"{"dimension": 2, "K": 4, "seed": 1}"#).unwrap();
    assert_eq!(cfg.spectrum.dimension, 2);
    assert_eq!(cfg.spectrum.truncation, 4);
    assert_eq!(cfg.seed(), 1);
    assert_eq!(cfg.simulation.dt, 1e-3);
    assert_eq!(cfg.simulation.horizon, 10.0);
    assert_eq!(cfg.spectrum.m, 3);
    assert_eq!(cfg.spectrum.alpha, 0.5);
    assert_eq!(cfg.output.format, OutputFormat::Csv);
}

#[test]
fn zero_dt_names_the_field() {
    let err = ExperimentConfig::parse(r#"{"seed": 1, "simulation": {"dt": 0}}"#).unwrap_err();
    assert!(err.to_string().contains("simulation.dt"), "{err}");
}

#[test]
fn missing_seed_is_rejected() {
    let err = ExperimentConfig::parse("{}").unwrap_err();
    assert!(err.to_string().contains("simulation.seed"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let err = ExperimentConfig::parse(r#"{"seed": 1, "simulation": {"dtt": 0.1}}"#).unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { .. }));
    assert!(err.to_string().contains("simulation"), "{err}");
    assert!(ExperimentConfig::parse(r#"{"seed": 1, "extra": 1}"#).is_err());
    assert!(ExperimentConfig::parse("not json").is_err());
}

#[test]
fn shorthand_conflict_is_rejected() {
    let err = ExperimentConfig::parse(r#"{"seed": 1, "simulation": {"seed": 2}}"#).unwrap_err();
    assert!(err.to_string().contains("simulation.seed"), "{err}");
}

#[test]
fn config_roundtrips() {
    let cfg = ExperimentConfig::parse(r#"{"seed": 5, "spectrum": {"K": 8, "decay_p": 14}}"#).unwrap();
    let again = ExperimentConfig::parse(&cfg.to_json()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash(), again.hash());
    assert_eq!(cfg.hash().len(), 16);
    let other = ExperimentConfig::parse(r#"{"seed": 6, "spectrum": {"K": 8, "decay_p": 14}}"#).unwrap();
    assert_ne!(cfg.hash(), other.hash());
}

#[test]
fn validate_reports_unit_gap() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 1}"#);
    let out = dir.path().join("validate.jsonl");
    let status = bin().arg("validate").arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let records = jsonl(&out);
    assert_eq!(records[0]["probe"], "manifest");
    let gap = records.iter().find(|r| r["probe"] == "gamma_star").unwrap();
    assert_eq!(gap["estimate"].as_f64(), Some(1.0));
    for r in &records {
        let mut keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["config_hash", "estimate", "params", "probe", "seed", "stderr"]);
    }
}

#[test]
fn decay_passes_on_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 1}"#);
    let out = dir.path().join("decay.jsonl");
    let status = bin().arg("decay").arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let records = jsonl(&out);
    let rec = records.iter().find(|r| r["probe"] != "manifest").unwrap();
    assert!(rec["estimate"].as_f64().unwrap() < 1e-6, "{rec}");
}

#[test]
fn tracer_bodies_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"seed": 9, "simulation": {"T": 1.0, "dt": 0.01, "ensemble": 4, "record_every": 10}}"#,
    );
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .arg("tracer")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "2");
    assert_eq!(body_of(&a), body_of(&b));
    let body = body_of(&a);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("run_id,t,x1,x2,disp1,disp2,v1,v2,norm"));
    // 4 runs, 11 record points each
    assert_eq!(lines.count(), 44);
    assert!(a.starts_with("# tracerflow"));
    assert!(dir.path().join("a.csv.drift.jsonl").exists());
}

#[test]
fn seed_override_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 9, "simulation": {"T": 0.1, "dt": 0.01, "ensemble": 2}}"#);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .arg("tracer")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seed-override", seed])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        body_of(&std::fs::read_to_string(out).unwrap())
    };
    assert_ne!(run("a.csv", "1"), run("b.csv", "2"));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 1, "simulation": {"dt": -1}}"#);
    let status = bin().arg("validate").arg("--config").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = bin().arg("validate").arg("--config").arg(dir.path().join("missing.json")).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = bin().arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn failed_check_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // far too coarse a step for the noiseless flow at this radius
    let config = write_config(dir.path(), r#"{"seed": 1, "simulation": {"T": 2, "dt": 0.05}}"#);
    let out = dir.path().join("decay.jsonl");
    let status = bin().arg("decay").arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn chain_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"seed": 3, "probe": {"chain_x": [1.0, -2.0], "chain_n": 5, "chain_paths": 1000, "chain_escape_steps": 10}}"#,
    );
    let out = dir.path().join("chain.csv");
    let status = bin().arg("chain").arg("--config").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let body = body_of(&std::fs::read_to_string(&out).unwrap());
    let rows: Vec<&str> = body.lines().collect();
    assert_eq!(rows[0], "x,n,closed,exact,mc,mc_stderr,H_n");
    assert_eq!(rows.len(), 1 + 2 * 5);
    let negative = rows.iter().find(|r| r.starts_with("-2,")).unwrap();
    let cols: Vec<&str> = negative.split(',').collect();
    assert_eq!(cols[2], "");
    assert_eq!(cols[6], "");
    let probes = jsonl(&dir.path().join("chain.csv.probes.jsonl"));
    assert!(probes.iter().any(|r| r["probe"] == "pt_poisson"));
}

#[test]
fn chain_at_zero_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 3, "probe": {"chain_x": [0.0]}}"#);
    let status = bin().arg("chain").arg("--config").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(1));
}
