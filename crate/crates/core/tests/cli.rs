use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use weylforge::cli_harness::{restore_table, CliError};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weylforge")).args(args).output().unwrap()
}

fn run_spec(command: &str, spec: &str, extra: &[&str]) -> Output {
    let spec = data(spec);
    let mut args = vec![command, "--spec", spec.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn flat_commutator_is_minus_hbar() {
    let out = run_spec("star", "flat_n1.json", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("[I, phi]: ℏ·(-1)"), "{text}");
    assert!(text.contains("[phi, I]: ℏ·(1)"), "{text}");
}

#[test]
fn reports_are_deterministic() {
    let a = run_spec("build-gamma", "fiber_adapted.json", &["--format", "json"]);
    let b = run_spec("build-gamma", "fiber_adapted.json", &["--format", "json"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let c = run_spec("build-gamma", "fiber_adapted.json", &["--format", "json", "--seed", "18"]);
    assert_eq!(c.status.code(), Some(0));
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn verification_commands_pass() {
    for (cmd, spec) in [
        ("verify-geometry", "fiber_adapted.json"),
        ("verify-star", "flat_n1.json"),
        ("verify-star", "fiber_adapted.json"),
        ("lift", "fiber_adapted.json"),
        ("check-lagrangian", "fiber_adapted.json"),
        ("semiclassical", "fiber_adapted.json"),
        ("normalize-form", "worked_normalization.json"),
        ("verify-equivalence", "equivalence.json"),
        ("quantum-corrections", "equivalence.json"),
    ] {
        let out = run_spec(cmd, spec, &[]);
        assert_eq!(out.status.code(), Some(0), "{cmd} {spec}: {}{}", stdout(&out), stderr(&out));
    }
}

#[test]
fn worked_normalization_output() {
    let out = run_spec("normalize-form", "worked_normalization.json", &["--format", "json"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let items = report["items"].as_array().unwrap();
    let text = |key: &str| items.iter().find(|i| i["key"] == key).unwrap()["text"].as_str().unwrap().to_string();
    assert_eq!(text("omega_prime"), "[-1]*dI1^dphi1");
    assert!(text("gamma").contains("dI1"), "{}", text("gamma"));
    assert_eq!(report["passed"], true);
}

#[test]
fn failed_verification_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("identity.json");
    let text = std::fs::read_to_string(data("equivalence.json")).unwrap().replace("-1/2", "0");
    std::fs::write(&spec, text).unwrap();
    let out = run(&["verify-equivalence", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).starts_with("verify-equivalence: FAIL"));
}

#[test]
fn input_errors_exit_two() {
    let out = run_spec("check-lagrangian", "non_adapted.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Γ_{Iφφ} must vanish"), "{}", stderr(&out));

    let out = run_spec("star", "bad_rational.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("parse error at functions.f"), "{}", stderr(&out));

    let out = run_spec("star", "future_schema.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("schema version 2"), "{}", stderr(&out));

    let out = run_spec("star", "unknown_key.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("connexion"), "{}", stderr(&out));

    let out = run_spec("normalize-form", "flat_n1.json", &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shallow_degree_needs_override() {
    let out = run_spec("star", "flat_n1.json", &["--degree", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_spec("star", "flat_n1.json", &["--degree", "4", "--allow-shallow-degree"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("possibly truncated"));
}

#[test]
fn state_persistence_and_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let state_arg = state.to_str().unwrap();
    let built = run_spec("star", "fiber_adapted.json", &[]);
    let out = run_spec("build-gamma", "fiber_adapted.json", &["--save-state", state_arg]);
    assert_eq!(out.status.code(), Some(0));
    let reused = run_spec("star", "fiber_adapted.json", &["--load-state", state_arg]);
    assert_eq!(reused.status.code(), Some(0), "{}", stderr(&reused));
    assert_eq!(reused.stdout, built.stdout);

    let other = run_spec("star", "fiber_adapted.json", &["--load-state", state_arg, "--seed", "99"]);
    assert_eq!(other.status.code(), Some(2));
    assert!(stderr(&other).contains("hash mismatch"));

    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&state).unwrap()).unwrap();
    doc["gamma"][0]["coeff"][0]["re"] = "77".into();
    std::fs::write(&state, serde_json::to_string(&doc).unwrap()).unwrap();
    let tampered = run_spec("star", "fiber_adapted.json", &["--load-state", state_arg]);
    assert_eq!(tampered.status.code(), Some(2));
    assert!(stderr(&tampered).contains("hash mismatch"), "{}", stderr(&tampered));
}

#[test]
fn table_written_and_restored() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.json");
    let report = dir.path().join("report.json");
    let out = run_spec(
        "star-table",
        "fiber_adapted.json",
        &["--save-table", table.to_str().unwrap(), "--out", report.to_str().unwrap(), "--format", "json"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let hash = report["items"][0]["data"].as_str().unwrap().to_string();
    let restored = restore_table(&table, Some(&hash)).unwrap();
    assert_eq!(restored.basis.len(), 6);
    assert_eq!(restored.entries.len(), 36);
    assert!(matches!(restore_table(&table, Some("0")), Err(CliError::HashMismatch { .. })));
}
