//! End-to-end runs of the compiled binary: report shapes, exit codes, and
//! byte-level determinism under a fixed seed.

use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_batchrl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout should be JSON: {e}\n{}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

#[test]
fn nquery_rows_all_hold_and_rerun_is_byte_identical() {
    let args = ["nquery", "--gamma-list", "0.9,0.99", "--d-list", "5,10,15"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, second.stdout, "reruns must not drift");
    let text = String::from_utf8(first.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("gamma,d,i_value,nquery,"));
    assert!(header.ends_with(",all_hold"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        assert!(row.ends_with(",true"), "bound failed in: {row}");
    }
}

#[test]
fn adversary_certificate_survives_recheck() {
    let out = run(&[
        "adversary",
        "--family",
        "bpi",
        "--gamma",
        "0.9",
        "--d",
        "6",
        "--design",
        "random",
        "--n",
        "200",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["schema"], 1);
    assert_eq!(report["found"], true);
    let cert = &report["certificate"];
    assert_eq!(cert["datasets_identical"], true);
    assert_eq!(cert["digest_plus"], cert["digest_minus"]);
    assert_eq!(cert["bound_met"], true);
    let forced = cert["forced_error"].as_f64().unwrap();
    let bound = cert["bound"].as_f64().unwrap();
    assert!(forced >= bound - 1e-12, "forced {forced} under bound {bound}");
}

#[test]
fn adversary_rerun_is_byte_identical_via_out_file() {
    let dir = std::env::temp_dir();
    let a = dir.join(format!("batchrl-cert-a-{}.json", std::process::id()));
    let b = dir.join(format!("batchrl-cert-b-{}.json", std::process::id()));
    let args = |path: &std::path::Path| {
        vec![
            "adversary".to_string(),
            "--family".into(),
            "ope".into(),
            "--gamma".into(),
            "0.9".into(),
            "--d".into(),
            "5".into(),
            "--design".into(),
            "orthonormal".into(),
            "--seed".into(),
            "2".into(),
            "--out".into(),
            path.display().to_string(),
        ]
    };
    let first = bin().args(args(&a)).output().unwrap();
    let second = bin().args(args(&b)).output().unwrap();
    assert_eq!(code(&first), 0);
    assert_eq!(code(&second), 0);
    assert!(first.stdout.is_empty(), "--out should silence stdout");
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b, "same seed, same bytes");
    let _ = std::fs::remove_file(&a);
    let _ = std::fs::remove_file(&b);
}

#[test]
fn dense_design_finds_no_hiding_direction_and_exits_one() {
    // Two axes at gamma = 0.5 in the plane reach every cap pair, so the
    // search correctly comes up empty and the command reports failure.
    let out = run(&[
        "adversary",
        "--family",
        "ope",
        "--gamma",
        "0.5",
        "--d",
        "2",
        "--design",
        "canonical",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 1);
    let report = json(&out);
    assert_eq!(report["found"], false);
    assert!(report["certificate"].is_null());
}

#[test]
fn separation_report_carries_both_soundness_numbers() {
    let out = run(&[
        "separation",
        "--family",
        "bpi",
        "--gamma",
        "0.95",
        "--d",
        "6",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["task"], "identify");
    assert!(report["batch_forced_error"].as_f64().unwrap() >= 0.5 - 1e-12);
    assert_eq!(report["online"]["queries"], 7);
    assert_eq!(report["online"]["suboptimality_gap"].as_f64().unwrap(), 0.0);
    assert_eq!(report["separated"], true);
}

#[test]
fn verify_accepts_hidden_family_alias_and_passes() {
    let out = run(&[
        "verify",
        "--family",
        "bpig",
        "--trials",
        "10",
        "--samples",
        "1000",
        "--seed",
        "42",
    ]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["family"], "bpi-orthant");
    assert_eq!(report["all_pass"], true);
    assert!(report["max_residual"].as_f64().unwrap() <= 1e-9);
    assert_eq!(report["reports"].as_array().unwrap().len(), 10);
}

#[test]
fn volume_matches_the_formula_within_noise() {
    let out = run(&[
        "volume",
        "--d",
        "3",
        "--b",
        "0.5",
        "--mc-samples",
        "50000",
        "--seed",
        "11",
    ]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["within_four_sigma"], true);
    let p = report["analytic_fraction"].as_f64().unwrap();
    assert!((p - 0.25).abs() < 1e-12, "planar height 1/2 sector is 1/4 of the ball: {p}");
}

#[test]
fn finite_horizon_recovers_every_step_exactly() {
    let out = run(&[
        "finite-horizon",
        "--d",
        "3",
        "--H",
        "4",
        "--trials",
        "3",
        "--seed",
        "13",
    ]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["queries_expected"], 12);
    assert_eq!(report["all_exact"], true);
    for trial in report["trials"].as_array().unwrap() {
        assert_eq!(trial["queries"], 12);
        assert!(trial["max_parameter_error"].as_f64().unwrap() <= 1e-10);
    }
}

#[test]
fn missing_seed_is_a_usage_error() {
    let out = run(&["volume", "--d", "3", "--b", "0.5"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--seed"), "usage text should name the flag: {err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["nquery", "--gamma-list", "0.9", "--d-list", "5", "--frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn task_the_family_cannot_pose_is_rejected() {
    let out = run(&[
        "adversary",
        "--family",
        "bpi",
        "--gamma",
        "0.9",
        "--d",
        "4",
        "--design",
        "random",
        "--task",
        "evaluate",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
}
