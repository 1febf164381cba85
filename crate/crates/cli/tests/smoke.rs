//! End-to-end command-line checks: usage, error codes, and the
//! synth -> train -> eval pipeline on a miniature configuration.

use std::path::Path;
use std::process::{Command, Output};

fn clrnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clrnet"))
        .args(args)
        .env("CLRNET_OUT", dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{}\nstderr:\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn help_lists_all_subcommands_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = clrnet(&["--help"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "train", "eval", "transfer", "experiment", "inspect"] {
        assert!(text.contains(sub), "help must mention '{sub}'");
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = clrnet(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty(), "usage text goes to stderr");
    assert!(out.stdout.is_empty(), "stdout stays machine-readable");
}

#[test]
fn missing_config_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = clrnet(&["train", "--config", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.json"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = clrnet(&["inspect", "--set", "model.bogus=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_reports_both_layer_count_conventions() {
    let dir = tempfile::tempdir().unwrap();
    let out = clrnet(&["inspect"], dir.path());
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["total_layers"], 206);
    assert_eq!(v["parameterized_layers"], 107);
    assert_eq!(v["default_freeze_k"], 129);
    assert_eq!(v["layers"].as_array().unwrap().len(), 206);
}

#[test]
fn synth_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let dirs = dir.path().to_str().unwrap().to_string();
    // Small but legal dataset; tiny model; two epochs.
    let tiny = [
        "--set",
        "data.n_videos=32",
        "--set",
        "data.samples_per_video=4",
        "--set",
        "model.channels=[2,2,2,2]",
        "--set",
        "model.input_hw=16",
    ];

    let mut synth_args = vec!["synth", "--out", &dirs, "--seed", "5"];
    synth_args.extend_from_slice(&tiny);
    let out = clrnet(&synth_args, dir.path());
    assert!(
        out.status.success(),
        "synth failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let synth_info = stdout_json(&out);
    let manifest = synth_info["manifest"].as_str().unwrap().to_string();
    assert!(dir.path().join("run.json").exists(), "reproducibility record");

    let datasets = format!("data.datasets=[\"{manifest}\"]");
    let mut train_args = vec![
        "train", "--out", &dirs, "--seed", "5", "--set", &datasets, "--set",
        "train.epochs=2", "--set", "train.batch_size=8", "--set", "train.adam.lr=0.001",
    ];
    train_args.extend_from_slice(&tiny);
    let out = clrnet(&train_args, dir.path());
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let train_info = stdout_json(&out);
    let model = train_info["model"].as_str().unwrap().to_string();
    assert!(Path::new(&model).exists());
    assert!(dir.path().join("history.csv").exists());

    let mut eval_args = vec![
        "eval", "--out", &dirs, "--seed", "5", "--model", &model, "--set", &datasets,
    ];
    eval_args.extend_from_slice(&tiny);
    let out = clrnet(&eval_args, dir.path());
    assert!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let eval_info = stdout_json(&out);
    assert!(dir.path().join("metrics.json").exists(), "metrics file exists");
    let f1 = eval_info["metrics"][0]["metrics"]["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
}
