//! End-to-end tests of the `pcity` binary: determinism, formats, exit
//! codes, config precedence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use poissonian_city::estimator::l1_error_bound;

fn pcity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcity"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).expect("output file exists")
}

#[test]
fn simulate_curve_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let status = pcity(&[
            "simulate-curve",
            "--seed",
            "7",
            "--replicates",
            "5",
            "--depth",
            "6",
            "--no-timestamp",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
    }
    assert_eq!(read(&a), read(&b));

    // Stopping at n ≥ depth yields depth+1 vertices per replicate.
    let text = read(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "replicate,n,S,Y,sigma");
    assert_eq!(lines.len(), 1 + 5 * 7);
}

#[test]
fn sample_flow_rows_carry_the_configured_depth_and_exact_l1_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("flow.csv");
    let status = pcity(&[
        "sample-flow",
        "--seed",
        "3",
        "--replicates",
        "50",
        "--depth",
        "7",
        "--eps",
        "1e-4",
        "--no-timestamp",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let text = read(&out);
    let mut rows = 0;
    for line in text.lines().skip(1) {
        if line.starts_with('#') {
            assert!(line.contains("aggregate:"));
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1], "7");
        let l1: f64 = fields[4].parse().unwrap();
        assert_eq!(l1, l1_error_bound(7), "l1 column must be the exact bound");
        rows += 1;
    }
    assert_eq!(rows, 50);
}

#[test]
fn sample_flow_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("t1.csv");
    let b = dir.path().join("t4.csv");
    for (out, threads) in [(&a, "1"), (&b, "4")] {
        let status = pcity(&[
            "sample-flow",
            "--seed",
            "9",
            "--replicates",
            "40",
            "--depth",
            "5",
            "--threads",
            threads,
            "--no-timestamp",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
    }
    assert_eq!(read(&a), read(&b));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"seed": 1, "replicates": 3, "depth": 4, "no_timestamp": true}"#,
    )
    .unwrap();

    let from_config = dir.path().join("c.csv");
    let status = pcity(&[
        "simulate-curve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        from_config.to_str().unwrap(),
    ]);
    assert!(status.status.success());

    let overridden = dir.path().join("o.csv");
    let status = pcity(&[
        "simulate-curve",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        overridden.to_str().unwrap(),
    ]);
    assert!(status.status.success());

    let direct = dir.path().join("d.csv");
    let status = pcity(&[
        "simulate-curve",
        "--seed",
        "2",
        "--replicates",
        "3",
        "--depth",
        "4",
        "--no-timestamp",
        "--out",
        direct.to_str().unwrap(),
    ]);
    assert!(status.status.success());

    assert_ne!(read(&from_config), read(&overridden));
    assert_eq!(read(&overridden), read(&direct));
}

#[test]
fn missing_config_exits_with_io_code() {
    let out = pcity(&["sample-flow", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_with_usage_code() {
    let out = pcity(&["sample-flow", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_passes_on_default_seed_and_fails_under_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports.json");
    // Reduced flow replicates keep the battery quick; the acceptance-scale
    // run lives in the library's acceptance suite.
    let status = pcity(&[
        "validate",
        "--replicates",
        "4000",
        "--format",
        "json",
        "--no-timestamp",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0), "default battery must pass");

    let text = read(&out);
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let names: Vec<String> = parsed["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap().to_string())
        .collect();
    for required in [
        "ks_rayleigh",
        "martingale_check",
        "decay_check",
        "moment_unit_checks",
        "mean_flow_experiment",
    ] {
        assert!(
            names.iter().any(|n| n.contains(required)),
            "battery must include {required}, got {names:?}"
        );
    }

    let corrupted = pcity(&["validate", "--replicates", "2000", "--corrupt-samplers"]);
    assert_eq!(
        corrupted.status.code(),
        Some(1),
        "corrupted samplers must fail the battery"
    );
}

#[test]
fn oracle_compare_reports_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle.json");
    let status = pcity(&[
        "oracle-compare",
        "--replicates",
        "2",
        "--box-height",
        "1.5",
        "--grid",
        "60",
        "--n-mc",
        "5000",
        "--format",
        "json",
        "--no-timestamp",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&read(&out)).unwrap();
    for row in parsed["box_volumes"].as_array().unwrap() {
        assert_eq!(row["within"], serde_json::Value::Bool(true));
    }
    assert_eq!(parsed["ks"].as_array().unwrap().len(), 2);
}
