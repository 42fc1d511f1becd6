use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn trayctl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trayctl"))
}

#[test]
fn run_then_check_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let c = configs();
    let out = trayctl()
        .args(["run", "--world"])
        .arg(c.join("world.json"))
        .arg("--mission")
        .arg(c.join("mission.json"))
        .arg("--sim")
        .arg(c.join("sim.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"], "done");
    let check = trayctl()
        .args(["check-invariants", "--trace"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(check.status.success());
}

#[test]
fn sim_file_references_and_fault_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = trayctl()
        .args(["run", "--sim"])
        .arg(configs().join("sim.json"))
        .args(["--seed", "11", "--fault", "transition-failure@2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"], "halted");
    let bad = trayctl()
        .args(["run", "--sim"])
        .arg(configs().join("sim.json"))
        .args(["--fault", "meteor@1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn check_invariants_fails_on_missing_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = trayctl()
        .args(["check-invariants", "--trace"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn plan_contacts_prints_a_valid_plan() {
    let out = trayctl()
        .args(["plan-contacts", "--problem"])
        .arg(configs().join("contact_pre_motion.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pattern = v["plan"]["pattern"].as_array().unwrap();
    assert_eq!(pattern.len(), 6);
    let sum = |s: &serde_json::Value| s.as_array().unwrap().iter().map(|c| c.as_i64().unwrap()).sum::<i64>();
    assert_eq!(sum(&pattern[0]), 0);
    assert_eq!(sum(&pattern[5]), 0);
    assert!(pattern[1..5].iter().all(|s| sum(s) == 2));
}

#[test]
fn solve_qp_reports_kkt() {
    let out = trayctl()
        .args(["solve-qp", "--problem"])
        .arg(configs().join("qp_box.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // min (x-1)^2 + (y-2.5)^2 on x + y = 1, 0 <= y <= 0.8 gives y = 0.8, x = 0.2
    let x: Vec<f64> = v["x"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect();
    assert!((x[0] - 0.2).abs() < 1e-7 && (x[1] - 0.8).abs() < 1e-7, "{x:?}");
    assert!(v["kkt"]["stationarity"].as_f64().unwrap() < 1e-6);
}
