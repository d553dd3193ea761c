use std::path::Path;
use std::process::{Command, Output};

use genshield::error::exit;

fn genshield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genshield"))
        .args(args)
        .env_remove("GENSHIELD_PRECISION")
        .output()
        .unwrap()
}

fn out_flag(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = genshield(&["synth", "--no-such-flag", "1"]);
    assert_eq!(o.status.code(), Some(exit::USAGE));
    assert_ne!(exit::USAGE, exit::DATA);
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(genshield(&[]).status.code(), Some(exit::USAGE));
}

#[test]
fn train_gen_without_estimator_names_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = genshield(&["train-gen", "--out", &out_flag(dir.path())]);
    assert_eq!(o.status.code(), Some(exit::DEPENDENCY));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run train-estimator first"), "{err}");
}

#[test]
fn bad_config_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = genshield(&["synth", "--out", &out_flag(dir.path()), "--synth-strength", "2"]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    let o = genshield(&["synth", "--out", &out_flag(dir.path()), "--seed", "x"]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "colour=blue\n").unwrap();
    let o = genshield(&["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
}

#[test]
fn corrupt_model_is_a_model_file_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.gmodel");
    std::fs::write(&model, b"not a model at all").unwrap();
    let o = genshield(&["inspect-model", "--out", &out_flag(dir.path()), "--model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(exit::MODEL_FILE));
}

#[test]
fn precision_selector_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_genshield"))
        .args(["synth", "--out", &out_flag(dir.path())])
        .env("GENSHIELD_PRECISION", "f16")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(exit::CONFIG));
}

#[test]
fn small_pipeline_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "out={}\nd=32\nstride=32\nsynth_samples=300\nest_epochs=1\ngen_warmup=1\ngen_epochs=1\nprobe_epochs=1\n",
            dir.path().display()
        ),
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    for cmd in ["synth", "train-estimator", "train-gen", "transform", "eval", "audit-dtw", "audit-probe"] {
        let o = genshield(&[cmd, "--config", cfg, "--seed", "4"]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let report = dir.path().join("reports").join(format!("{cmd}.json"));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(v["seed"], 4);
        assert_eq!(v["command"], cmd);
        assert!(v["timestamp"].is_string());
        assert_eq!(v["config"]["d"], "32");
    }
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reports/eval.json")).unwrap()).unwrap();
    for inference in ["activity", "gender"] {
        for data in ["raw", "transformed"] {
            assert!(eval["results"]["table"][inference][data].is_number(), "{inference}/{data}");
        }
    }
    assert!(eval["outputs"]["eval_table.csv"].is_string());
    let table = std::fs::read_to_string(dir.path().join("eval_table.csv")).unwrap();
    assert!(table.starts_with("inference,raw,transformed"));

    let model = dir.path().join("estimator.gmodel");
    let o = genshield(&["inspect-model", "--config", cfg, "--model", model.to_str().unwrap()]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("estimator for windows of 12 x 32"), "{stdout}");
}
