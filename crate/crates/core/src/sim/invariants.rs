//! Offline checks over a run directory.

use std::path::Path;

use nalgebra::Vector2;
use serde::Serialize;

use super::trace::{
    read_jsonl, read_trace, SimEvent, WorldRecord, EVENTS_FILE, TRACE_FILE, TRANSITIONS_FILE, WORLD_FILE,
};
use crate::error::Result;
use crate::footstep::GAIT_ORDER;
use crate::mission::{Node, TransitionRecord};

/// Barrier values below this count as a violation in filter-active rows.
pub const BARRIER_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvariantReport {
    pub rows: usize,
    pub filter_rows: usize,
    pub footholds: usize,
    pub min_h1_filter: Option<f64>,
    pub min_h2_filter: Option<f64>,
    pub violations: Vec<String>,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a run directory written by [`super::run_mission`]:
/// one row per tick, zone and filter flag consistent with the node, barrier
/// values non-negative while the filter is active, every committed foothold
/// safe in the planning world of its tick, gait swings in cyclic order,
/// mission edges from the allowed set and layer changes only at transitions.
pub fn check_invariants(dir: &Path) -> Result<InvariantReport> {
    let rows = read_trace(&dir.join(TRACE_FILE))?;
    let events: Vec<SimEvent> = read_jsonl(&dir.join(EVENTS_FILE))?;
    let transitions: Vec<TransitionRecord> = read_jsonl(&dir.join(TRANSITIONS_FILE))?;
    let world: WorldRecord = serde_json::from_str(&std::fs::read_to_string(dir.join(WORLD_FILE))?)?;
    let mut rep = InvariantReport {
        rows: rows.len(),
        ..Default::default()
    };
    let mut v = Vec::new();

    let mut prev: Option<(Node, usize)> = None;
    for (k, r) in rows.iter().enumerate() {
        if r.tick != k as u64 {
            v.push(format!("row {k} has tick {}", r.tick));
        }
        let Some(node) = Node::from_name(&r.node) else {
            v.push(format!("tick {}: unknown node {:?}", r.tick, r.node));
            continue;
        };
        if r.zone != node.zone() {
            v.push(format!(
                "tick {}: zone {:?} does not match node {}",
                r.tick, r.zone, r.node
            ));
        }
        if (r.filter == 1) != node.filter_active() {
            v.push(format!("tick {}: filter flag {} in node {}", r.tick, r.filter, r.node));
        }
        if r.filter == 1 {
            rep.filter_rows += 1;
            rep.min_h1_filter = Some(rep.min_h1_filter.map_or(r.h1, |m| m.min(r.h1)));
            rep.min_h2_filter = Some(rep.min_h2_filter.map_or(r.h2, |m| m.min(r.h2)));
            if r.h1 < -BARRIER_TOL || r.h2 < -BARRIER_TOL {
                v.push(format!("tick {}: barrier values h1 = {}, h2 = {}", r.tick, r.h1, r.h2));
            }
        }
        if let Some((pn, pl)) = prev {
            if pl != r.layer && !pn.is_transition() {
                v.push(format!(
                    "tick {}: layer changed from {pl} to {} outside a transition",
                    r.tick, r.layer
                ));
            }
            if pn.is_absorbing() {
                v.push(format!("tick {}: row after absorbing node {}", r.tick, pn.name()));
            }
        }
        prev = Some((node, r.layer));
    }

    let mut cur = Some(Node::Searching);
    let mut last_tick = 0;
    for t in &transitions {
        if !Node::edge_allowed(t.from, t.to) {
            v.push(format!(
                "tick {}: edge {} -> {} is not allowed",
                t.tick,
                t.from.name(),
                t.to.name()
            ));
        }
        if cur != Some(t.from) {
            v.push(format!(
                "tick {}: transition from {} but the machine is in {:?}",
                t.tick,
                t.from.name(),
                cur
            ));
        }
        if t.tick < last_tick {
            v.push(format!("tick {}: transitions out of order", t.tick));
        }
        match rows.get(t.tick as usize) {
            Some(r) if r.node == t.to.name() => {}
            _ => v.push(format!("tick {}: trace row does not show node {}", t.tick, t.to.name())),
        }
        cur = Some(t.to);
        last_tick = t.tick;
    }

    let mut lifts = 0usize;
    let mut swinging: Option<String> = None;
    for e in &events {
        let SimEvent::Foot { tick, layer, foot } = e else {
            continue;
        };
        match foot.kind.as_str() {
            "lift" => {
                let expected = GAIT_ORDER[lifts % 4].name();
                if foot.leg != expected {
                    v.push(format!("tick {tick}: lift of {} where {expected} was due", foot.leg));
                }
                if swinging.is_some() {
                    v.push(format!("tick {tick}: lift of {} while another leg swings", foot.leg));
                }
                swinging = Some(foot.leg.clone());
                lifts += 1;
            }
            "land" | "place" => {
                if foot.kind == "land" {
                    if swinging.as_deref() != Some(foot.leg.as_str()) {
                        v.push(format!("tick {tick}: {} lands without a matching lift", foot.leg));
                    }
                    swinging = None;
                }
                rep.footholds += 1;
                let w = world.at(*tick).build()?;
                let p = Vector2::new(foot.position[0], foot.position[1]);
                if *layer >= w.layer_count() || !w.foothold_safe(*layer, &p) {
                    v.push(format!(
                        "tick {tick}: {} foothold ({}, {}) on layer {layer} is outside the safe region",
                        foot.leg, p.x, p.y
                    ));
                }
            }
            other => v.push(format!("tick {tick}: unknown foot event {other:?}")),
        }
    }
    rep.violations = v;
    Ok(rep)
}
