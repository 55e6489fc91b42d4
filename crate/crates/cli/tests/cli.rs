//! Black-box tests for the command-line interface: argument handling,
//! config validation, exit codes and artifact layout.

use std::path::Path;
use std::process::{Command, Output};

/// Tiny synthetic experiment that trains in milliseconds.
const TINY: &str = r#"
[dataset]
kind = "synthetic"
low_rates = [0.3, 0.1]
high_rates = [0.6, 0.9]
n_samples = 400
seed = 0

[partition]
setting = "esg"
num_clients = 4
seed = 0

[algorithm]
name = "fedminmax"
rounds = 5
hidden_layers = [4]

[evaluation]
test_fraction = 0.2
seeds = [1, 2]

[output]
dir = "runs/tiny"
"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).expect("config written");
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedminmax"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exited")
}

#[test]
fn run_writes_reports_and_aggregate() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let result = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for seed in [1, 2] {
        for file in ["metrics.csv", "summary.json", "timing.txt"] {
            assert!(
                out.join(format!("seed-{seed}")).join(file).is_file(),
                "missing seed-{seed}/{file}"
            );
        }
    }
    let metrics = std::fs::read_to_string(out.join("seed-1/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 6, "header plus one row per round");

    let aggregate: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aggregate.json")).unwrap())
            .expect("valid json");
    assert_eq!(aggregate["seeds"], serde_json::json!([1, 2]));
    assert!(aggregate["mean"]["worst_risk"].is_f64());
    assert!(aggregate["std"]["worst_risk"].is_f64());
    assert_eq!(aggregate["per_seed"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = write_config(dir.path(), &format!("{TINY}\nbanana = 1\n"));
    let result = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(exit_code(&result), 1);
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("banana"), "stderr: {stderr}");
}

#[test]
fn missing_config_file_is_a_validation_error() {
    let result = run(&["run", "--config", "/nonexistent/experiment.toml"]);
    assert_eq!(exit_code(&result), 1);
}

#[test]
fn bad_flag_value_is_a_validation_error() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = write_config(dir.path(), TINY);
    let result = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--algorithm",
        "sgd",
    ]);
    assert_eq!(exit_code(&result), 1);
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("algorithm.name"), "stderr: {stderr}");
}

#[test]
fn numeric_divergence_is_a_runtime_error() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = write_config(
        dir.path(),
        &TINY.replace("rounds = 5", "rounds = 5\nmodel_lr = 1e200"),
    );
    let out = dir.path().join("out");
    let result = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        2,
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("round"), "stderr: {stderr}");
}

#[test]
fn flags_override_config_keys() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let result = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "7",
        "--rounds",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(out.join("seed-7").is_dir(), "--seed replaces the seed list");
    assert!(!out.join("seed-1").exists());
    let metrics = std::fs::read_to_string(out.join("seed-7/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4, "--rounds overrides the config");
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(exit_code(&run(&["--help"])), 0);
    assert_eq!(exit_code(&run(&["--version"])), 0);
    assert_eq!(exit_code(&run(&["run", "--help"])), 0);
    let nonsense = run(&["frobnicate"]);
    assert_eq!(exit_code(&nonsense), 1);
}

#[test]
fn project_prints_the_projected_vector() {
    let result = run(&["project", "0.4", "0.4", "0.4"]);
    assert_eq!(exit_code(&result), 0);
    let stdout = String::from_utf8_lossy(&result.stdout);
    let values: Vec<f64> = stdout
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(", ")
        .map(|v| v.parse().expect("numeric output"))
        .collect();
    assert_eq!(values.len(), 3);
    let sum: f64 = values.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12, "projection sums to one: {stdout}");
    for v in &values {
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "uniform input stays uniform");
    }

    let negatives = run(&["project", "--", "-5.0", "1.0", "2.0"]);
    assert_eq!(exit_code(&negatives), 0);
    let stdout = String::from_utf8_lossy(&negatives.stdout);
    assert!(stdout.starts_with("[0"), "clipped coordinate: {stdout}");

    let nan = run(&["project", "nan", "0.5"]);
    assert_eq!(exit_code(&nan), 1, "non-finite input is a validation error");
}

#[test]
fn compare_requires_matching_rates_and_writes_report() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mismatched = write_config(
        dir.path(),
        &format!("{TINY}\n[compare]\nmodel_lr = 0.2\n"),
    );
    let result = run(&["compare", "--config", mismatched.to_str().unwrap()]);
    assert_eq!(exit_code(&result), 1);
    assert!(
        String::from_utf8_lossy(&result.stderr).contains("identical rates"),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );

    let out = dir.path().join("cmp");
    let ok = write_config(dir.path(), &format!("{TINY}\n[compare]\nmodel_lr = 0.1\n"));
    let result = run(&[
        "compare",
        "--config",
        ok.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("compare.json")).unwrap())
            .expect("valid json");
    let max_param = report["max_param_diff"].as_f64().unwrap();
    assert!(max_param <= 1e-6, "federated matches pooled: {max_param}");
    assert_eq!(report["param_diffs"].as_array().unwrap().len(), 5);
}

#[test]
fn analyze_feasibility_reports_reachability() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = write_config(
        dir.path(),
        &TINY
            .replace("setting = \"esg\"", "setting = \"ssg\"")
            .replace("rounds = 5", "rounds = 50"),
    );
    let out = dir.path().join("feas");
    let result = run(&[
        "analyze-feasibility",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("feasibility.json")).unwrap())
            .expect("valid json");
    assert_eq!(
        report["feasible"], true,
        "single-group shards can express any group weighting: {report}"
    );
    assert!(report["afl_l1_gap"].is_f64());
    assert_eq!(report["lambda"].as_array().unwrap().len(), 4);
}

#[test]
fn synth_gen_writes_a_loadable_snapshot() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("snap");
    let result = run(&[
        "synth-gen",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let snapshot = out.join("dataset.snapshot");
    let dataset: fedminmax::data::GroupedDataset<f64> =
        fedminmax::data::load_dataset(&snapshot).expect("snapshot loads");
    assert_eq!(dataset.len(), 400);
    assert_eq!(dataset.num_groups(), 2);
}
