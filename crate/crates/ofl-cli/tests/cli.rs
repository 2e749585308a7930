//! Interface-contract tests for the `ofl` binary: subcommands, output
//! formats, and exit codes (0 ok, 1 validation, 2 internal).

use std::path::Path;
use std::process::{Command, Output};

fn ofl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ofl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn generate_simulate_opt_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let out = ofl(&[
        "generate",
        "weighted-lb-tree",
        "--n",
        "4",
        "--f",
        "16",
        "--out",
        inst.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(inst.exists());

    let out = ofl(&[
        "simulate",
        "--alg",
        "wrfl",
        "--instance",
        inst.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["total"], serde_json::json!(64.0));

    let out = ofl(&["opt", "--instance", inst.to_str().unwrap()]);
    assert!(out.status.success());
    let solution: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(solution["cost"], serde_json::json!(30.25));
    assert_eq!(solution["exactness"], serde_json::json!("exact"));
}

#[test]
fn simulate_is_deterministic_and_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    ofl(&[
        "generate",
        "separated-line",
        "--n",
        "20",
        "--d",
        "1",
        "--f",
        "8",
        "--seed",
        "3",
        "--out",
        inst.to_str().unwrap(),
    ]);
    let trace_a = dir.path().join("a.jsonl");
    let trace_b = dir.path().join("b.jsonl");
    let run = |trace: &Path| {
        ofl(&[
            "simulate",
            "--alg",
            "rfl",
            "--instance",
            inst.to_str().unwrap(),
            "--seed",
            "11",
            "--trace",
            trace.to_str().unwrap(),
        ])
    };
    let out_a = run(&trace_a);
    let out_b = run(&trace_b);
    assert!(out_a.status.success());
    assert_eq!(stdout(&out_a), stdout(&out_b));
    assert_eq!(
        std::fs::read_to_string(&trace_a).unwrap(),
        std::fs::read_to_string(&trace_b).unwrap()
    );
    assert_eq!(std::fs::read_to_string(&trace_a).unwrap().lines().count(), 20);
}

#[test]
fn opt_on_single_request_instance_costs_f() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("one.json");
    ofl(&[
        "generate",
        "separated-line",
        "--n",
        "1",
        "--d",
        "1",
        "--f",
        "5",
        "--seed",
        "0",
        "--out",
        inst.to_str().unwrap(),
    ]);
    let out = ofl(&["opt", "--instance", inst.to_str().unwrap()]);
    assert!(out.status.success());
    let solution: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(solution["cost"], serde_json::json!(5.0));
}

#[test]
fn experiment_writes_tables_with_metadata_header() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    let results = dir.path().join("results");
    std::fs::write(
        &config_path,
        r#"{
            "kind": "ratio_sweep",
            "grid": [{"generator": "weighted_lb_tree", "n": 4, "f": 16.0}],
            "algorithms": [{"alg": "wrfl"}],
            "secretarial": true,
            "trials": 5,
            "seed": 12
        }"#,
    )
    .unwrap();
    let out = ofl(&[
        "experiment",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(results.join("results.csv")).unwrap();
    assert!(csv.starts_with("# version="));
    assert!(csv.contains("config_hash="));
    assert!(csv.lines().count() >= 3);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("results.json")).unwrap())
            .unwrap();
    assert_eq!(json["metadata"]["rng"], serde_json::json!("chacha8"));
    assert_eq!(json["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not valid json").unwrap();
    let out = ofl(&["validate", "--instance", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = ofl(&["simulate", "--alg", "nope", "--instance", bad.to_str().unwrap(), "--seed", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_one() {
    let out = ofl(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");

    let out = ofl(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn incompatible_algorithm_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("weighted.json");
    ofl(&[
        "generate",
        "weighted-lb-tree",
        "--n",
        "4",
        "--f",
        "2",
        "--out",
        inst.to_str().unwrap(),
    ]);
    // MRFL needs congestion.
    let out = ofl(&[
        "simulate",
        "--alg",
        "mrfl",
        "--instance",
        inst.to_str().unwrap(),
        "--seed",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
