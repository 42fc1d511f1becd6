use std::path::{Path, PathBuf};

use tray_autonomy::geometry::WorldConfig;
use tray_autonomy::mission::{MissionConfig, Node, TransitionRecord};
use tray_autonomy::sim::{
    check_invariants, read_jsonl, read_trace, run_mission, ExitStatus, Fault, SimConfig, SimEvent, TRACE_FILE,
    TRANSITIONS_FILE,
};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn inputs() -> (WorldConfig, MissionConfig, SimConfig) {
    let c = configs();
    (
        WorldConfig::load(c.join("world.json")).unwrap(),
        MissionConfig::load(&c.join("mission.json")).unwrap(),
        SimConfig::load(&c.join("sim.json")).unwrap(),
    )
}

fn nodes(dir: &Path) -> Vec<Node> {
    let t: Vec<TransitionRecord> = read_jsonl(&dir.join(TRANSITIONS_FILE)).unwrap();
    std::iter::once(Node::Searching).chain(t.iter().map(|r| r.to)).collect()
}

#[test]
fn nominal_mission_visits_every_stage() {
    let (w, m, s) = inputs();
    let dir = tempfile::tempdir().unwrap();
    let out = run_mission(&w, &m, &s, dir.path()).unwrap();
    assert_eq!(out.status, ExitStatus::Done);
    assert_eq!(out.summary.layer_changes, 1);
    assert_eq!(out.summary.final_layer, m.start_layer - 1);
    use Node::*;
    assert_eq!(
        nodes(dir.path()),
        vec![
            Searching,
            LocomotionInspect,
            Searching,
            LocomotionToWaypoint,
            LocomotionToManway,
            PreMotion,
            TransitionDown,
            PostMotion,
            LocomotionToSafe,
            Done
        ]
    );
    let rep = check_invariants(dir.path()).unwrap();
    assert!(rep.ok(), "{:?}", rep.violations);
    assert!(rep.filter_rows > 0);
    assert!(rep.footholds > 8);
}

#[test]
fn injected_transition_failure_halts() {
    let (w, m, mut s) = inputs();
    s.faults.push(Fault::TransitionFailure { layer: m.start_layer });
    let dir = tempfile::tempdir().unwrap();
    let out = run_mission(&w, &m, &s, dir.path()).unwrap();
    assert_eq!(out.status, ExitStatus::Halted);
    assert_eq!(out.summary.layer_changes, 0);
    let t: Vec<TransitionRecord> = read_jsonl(&dir.path().join(TRANSITIONS_FILE)).unwrap();
    let last = t.last().unwrap();
    assert_eq!((last.from, last.to), (Node::TransitionDown, Node::Halted));
    assert!(check_invariants(dir.path()).unwrap().ok());
}

#[test]
fn zero_goals_go_straight_to_waypoint() {
    let (w, mut m, s) = inputs();
    m.stages[0].goals.clear();
    let dir = tempfile::tempdir().unwrap();
    let out = run_mission(&w, &m, &s, dir.path()).unwrap();
    assert_eq!(out.status, ExitStatus::Done);
    assert_eq!(&nodes(dir.path())[..2], &[Node::Searching, Node::LocomotionToWaypoint]);
}

#[test]
fn lagged_base_still_completes() {
    let (w, m, mut s) = inputs();
    s.lag = true;
    let dir = tempfile::tempdir().unwrap();
    let out = run_mission(&w, &m, &s, dir.path()).unwrap();
    assert_eq!(out.status, ExitStatus::Done);
    assert!(check_invariants(dir.path()).unwrap().ok());
}

#[test]
fn perception_rejection_keeps_searching() {
    let (w, m, mut s) = inputs();
    // noise large enough that the side-length check fails every time
    s.noise_sigma = 0.5;
    let mut m = m;
    m.timeouts.insert("Searching".into(), 5.0);
    let dir = tempfile::tempdir().unwrap();
    let out = run_mission(&w, &m, &s, dir.path()).unwrap();
    assert_eq!(out.status, ExitStatus::Halted);
    assert_eq!(out.summary.halt_reason.as_deref(), Some("timeout"));
    let events: Vec<SimEvent> = read_jsonl(&dir.path().join("events.jsonl")).unwrap();
    let rejected = events
        .iter()
        .filter(|e| matches!(e, SimEvent::Perception { outcome, .. } if outcome == "rejected"))
        .count();
    assert!(rejected >= 4);
}

#[test]
fn bad_configs_fail_before_any_tick() {
    let (w, mut m, s) = inputs();
    m.start_layer = 7;
    let dir = tempfile::tempdir().unwrap();
    assert!(run_mission(&w, &m, &s, &dir.path().join("out")).is_err());
    assert!(!dir.path().join("out").join(TRACE_FILE).exists());

    let (w, m, mut s) = inputs();
    s.dt = -1.0;
    assert!(run_mission(&w, &m, &s, &dir.path().join("out")).is_err());
}

#[test]
fn checker_flags_tampered_traces() {
    let (w, m, s) = inputs();
    let dir = tempfile::tempdir().unwrap();
    run_mission(&w, &m, &s, dir.path()).unwrap();
    let path = dir.path().join(TRACE_FILE);
    let rows = read_trace(&path).unwrap();
    let k = rows.iter().position(|r| r.filter == 1).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[k + 1].split(',').map(String::from).collect();
    cells[8] = "-0.5".into();
    cells[20] = "search".into();
    lines[k + 1] = cells.join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let rep = check_invariants(dir.path()).unwrap();
    assert!(rep.violations.iter().any(|v| v.contains("barrier")));
    assert!(rep.violations.iter().any(|v| v.contains("zone")));
}
