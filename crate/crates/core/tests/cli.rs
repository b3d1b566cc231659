//! The binary end to end: outputs, exit codes and determinism.

use std::process::{Command, Output};

use serde_json::{json, Value};

fn stkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stkit")).args(args).env("STKIT_THREADS", "2").output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn check_balanced_chain() {
    let o = stkit(&["check-balanced", "--dag", "chain3.json", "--pi", "1,2,3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o), json!({ "balanced": true }));
}

#[test]
fn imec_pairs_chain() {
    let o = stkit(&["imec-pairs", "--dag", "chain3.json", "--targets", "[[],[1]]"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)[1]["pairs"], json!([[[2, 3], [1]], [[3], [2]], [[3], [1, 2]], [[2], [1, 3]]]));
}

#[test]
fn gen_ideal_chain() {
    let o = stkit(&["gen-ideal", "--family", "model-invariants", "--dag", "chain3.json"]);
    assert_eq!(o.status.code(), Some(0));
    let gens: Vec<Value> = stdout_json(&o)["generators"].as_array().unwrap().iter().map(|g| g["polynomial"].clone()).collect();
    assert_eq!(gens, [json!("p000*p101 - p001*p100"), json!("p010*p111 - p011*p110")]);
}

#[test]
fn files_on_disk_are_read() {
    let dir = std::env::temp_dir().join(format!("stkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("collider.json");
    std::fs::write(&path, r#"{"n": 3, "edges": [[1, 3], [2, 3]], "cards": [2, 2, 2]}"#).unwrap();
    let o = stkit(&["check-balanced", "--dag", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["balanced"], json!(false));

    std::fs::write(&path, r#"{"n": 2, "edges": [[1, 2], [2, 1]], "cards": [2, 2]}"#).unwrap();
    let o = stkit(&["check-balanced", "--dag", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_output_is_deterministic() {
    let a = stkit(&["sweep", "--kind", "classification", "--n", "4", "--sampled", "3", "--extra", "2"]);
    let b = stkit(&["sweep", "--kind", "classification", "--n", "4", "--sampled", "3", "--extra", "2"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<&str> = std::str::from_utf8(&a.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 3 * 3 + 1);
    let summary: Value = serde_json::from_str(lines.last().unwrap()).unwrap();
    assert_eq!(summary["summary"]["failed"], json!(0));
}

#[test]
fn verify_reports_json_lines() {
    let o = stkit(&["verify", "--dag", "chain3", "--targets", "[[],[1]]", "--family", "i-ci", "--samples", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let summaries: Vec<Value> =
        text.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()).filter(|v| v.get("summary").is_some()).collect();
    assert_eq!(summaries.len(), 3);
    assert!(summaries.iter().all(|s| s["summary"]["failed"] == json!(0)));
}

#[test]
fn export_formats() {
    let o = stkit(&["export-cas", "--dag", "four-cycle", "--format", "m2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("T = ker phi;"));
    let o = stkit(&["export-dot", "--fixture", "multinet-guard", "--ceg"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("dashed"));
    let o = stkit(&["build-tree", "--dag", "four-cycle", "--pi", "1,3,2,4", "--format", "dot"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn usage_errors() {
    assert_eq!(stkit(&[]).status.code(), Some(2));
    assert_eq!(stkit(&["gen-ideal", "--dag", "chain3"]).status.code(), Some(2));
    assert_eq!(stkit(&["gen-ideal", "--family", "inv", "--dag", "chain3", "--targets", "[[1]]"]).status.code(), Some(2));
    assert_eq!(stkit(&["--help"]).status.code(), Some(0));
}
