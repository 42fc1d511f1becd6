//! Inspection mission state machine.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, BaseState, TrayWorld};
use crate::safety::{h1, h2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Searching,
    LocomotionInspect,
    LocomotionToWaypoint,
    LocomotionToManway,
    PreMotion,
    TransitionUp,
    TransitionDown,
    PostMotion,
    LocomotionToSafe,
    Halted,
    Done,
}

impl Node {
    pub const ALL: [Node; 11] = [
        Node::Searching,
        Node::LocomotionInspect,
        Node::LocomotionToWaypoint,
        Node::LocomotionToManway,
        Node::PreMotion,
        Node::TransitionUp,
        Node::TransitionDown,
        Node::PostMotion,
        Node::LocomotionToSafe,
        Node::Halted,
        Node::Done,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Node::Searching => "Searching",
            Node::LocomotionInspect => "LocomotionInspect",
            Node::LocomotionToWaypoint => "LocomotionToWaypoint",
            Node::LocomotionToManway => "LocomotionToManway",
            Node::PreMotion => "PreMotion",
            Node::TransitionUp => "TransitionUp",
            Node::TransitionDown => "TransitionDown",
            Node::PostMotion => "PostMotion",
            Node::LocomotionToSafe => "LocomotionToSafe",
            Node::Halted => "Halted",
            Node::Done => "Done",
        }
    }

    pub fn from_name(s: &str) -> Option<Node> {
        Node::ALL.into_iter().find(|n| n.name() == s)
    }

    pub fn is_absorbing(self) -> bool {
        matches!(self, Node::Halted | Node::Done)
    }

    pub fn filter_active(self) -> bool {
        matches!(self, Node::LocomotionInspect | Node::LocomotionToWaypoint)
    }

    pub fn gait_active(self) -> bool {
        matches!(
            self,
            Node::LocomotionInspect | Node::LocomotionToWaypoint | Node::LocomotionToManway | Node::LocomotionToSafe
        )
    }

    pub fn is_transition(self) -> bool {
        matches!(self, Node::TransitionUp | Node::TransitionDown)
    }

    /// Zone label written to the trace.
    pub fn zone(self) -> &'static str {
        match self {
            Node::Searching => "search",
            Node::LocomotionInspect => "inspection",
            Node::LocomotionToWaypoint => "waypoint",
            Node::LocomotionToManway => "transition-ready",
            Node::PreMotion => "pre-motion",
            Node::TransitionUp => "transition-up",
            Node::TransitionDown => "transition-down",
            Node::PostMotion => "post-motion",
            Node::LocomotionToSafe => "safe-location",
            Node::Halted => "halted",
            Node::Done => "done",
        }
    }

    /// Edges of the mission graph, excluding the edge to `Halted` that every
    /// non-absorbing node has.
    pub fn successors(self) -> &'static [Node] {
        use Node::*;
        match self {
            Searching => &[LocomotionInspect, LocomotionToWaypoint],
            LocomotionInspect => &[LocomotionInspect, Searching, LocomotionToSafe],
            LocomotionToWaypoint => &[LocomotionToManway],
            LocomotionToManway => &[PreMotion],
            PreMotion => &[TransitionUp, TransitionDown],
            TransitionUp | TransitionDown => &[PostMotion],
            PostMotion => &[LocomotionInspect, LocomotionToSafe],
            LocomotionToSafe => &[Done],
            Halted | Done => &[],
        }
    }

    pub fn edge_allowed(from: Node, to: Node) -> bool {
        (!from.is_absorbing() && to == Node::Halted) || from.successors().contains(&to)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionPlan {
    pub direction: Direction,
    pub waypoint: Pose,
    pub ready: Pose,
    /// Base pose on the new layer when playback ends.
    pub landing: Pose,
    /// Joint trajectory file, relative to the mission file. A straight-line
    /// base trajectory is generated when absent.
    #[serde(default)]
    pub trajectory: Option<String>,
    #[serde(default = "default_transition_duration")]
    pub duration: f64,
}

fn default_transition_duration() -> f64 {
    8.0
}

/// Goals visited on one layer, optionally followed by a layer change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    #[serde(default)]
    pub goals: Vec<Pose>,
    #[serde(default)]
    pub transition: Option<TransitionPlan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub start_layer: usize,
    pub start: Pose,
    pub stages: Vec<Stage>,
    pub safe_location: Pose,
    #[serde(default = "default_sweep_amplitude")]
    pub sweep_amplitude: f64,
    #[serde(default = "default_sweep_period")]
    pub sweep_period: f64,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    #[serde(default = "default_yaw_tolerance")]
    pub yaw_tolerance: f64,
    #[serde(default = "default_timeout")]
    pub default_timeout: f64,
    /// Per-node overrides, keyed by node name.
    #[serde(default)]
    pub timeouts: BTreeMap<String, f64>,
    /// Nodes in which perception samples are collected.
    #[serde(default = "default_acquire")]
    pub acquire_in: Vec<Node>,
    #[serde(default = "default_samples")]
    pub perception_samples: usize,
    #[serde(default = "default_horizon")]
    pub contact_horizon: usize,
    #[serde(default = "default_step_duration")]
    pub contact_step_duration: f64,
    /// Reference controller gains and base speed bound during locomotion.
    #[serde(default = "default_gain")]
    pub position_gain: f64,
    #[serde(default = "default_speed")]
    pub max_speed: f64,
    #[serde(default = "default_heading_gain")]
    pub heading_gain: f64,
    #[serde(default = "default_heading_rate")]
    pub max_heading_rate: f64,
}

fn default_sweep_amplitude() -> f64 {
    0.3
}
fn default_sweep_period() -> f64 {
    2.0
}
fn default_goal_tolerance() -> f64 {
    0.05
}
fn default_yaw_tolerance() -> f64 {
    0.05
}
fn default_timeout() -> f64 {
    60.0
}
fn default_acquire() -> Vec<Node> {
    vec![Node::Searching]
}
fn default_samples() -> usize {
    100
}
fn default_horizon() -> usize {
    6
}
fn default_step_duration() -> f64 {
    1.0
}
fn default_gain() -> f64 {
    1.0
}
fn default_speed() -> f64 {
    0.3
}
fn default_heading_gain() -> f64 {
    1.0
}
fn default_heading_rate() -> f64 {
    0.5
}

impl MissionConfig {
    /// Reads a mission file; relative trajectory paths are resolved against
    /// the file's directory.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(std::path::Path::new("."));
        for t in cfg.stages.iter_mut().filter_map(|s| s.transition.as_mut()) {
            if let Some(p) = &t.trajectory {
                if std::path::Path::new(p).is_relative() {
                    t.trajectory = Some(dir.join(p).to_string_lossy().into_owned());
                }
            }
        }
        Ok(cfg)
    }

    pub fn timeout(&self, node: Node) -> f64 {
        self.timeouts.get(node.name()).copied().unwrap_or(self.default_timeout)
    }

    /// Layer the robot is on while executing stage `k`.
    pub fn stage_layer(&self, k: usize) -> usize {
        let mut layer = self.start_layer as i64;
        for s in &self.stages[..k] {
            match s.transition.as_ref().map(|t| t.direction) {
                Some(Direction::Down) => layer -= 1,
                Some(Direction::Up) => layer += 1,
                None => {}
            }
        }
        layer.max(0) as usize
    }

    pub fn validate(&self, world: &TrayWorld) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.stages.is_empty() {
            return err("mission needs at least one stage".into());
        }
        if !(self.sweep_amplitude >= 0.0) || !(self.sweep_period > 0.0) {
            return err("sweep amplitude must be non-negative and period positive".into());
        }
        if !(self.goal_tolerance > 0.0) || !(self.yaw_tolerance > 0.0) {
            return err("tolerances must be positive".into());
        }
        if self.perception_samples == 0 {
            return err("perception_samples must be at least 1".into());
        }
        if !(self.max_speed > 0.0) || !(self.position_gain > 0.0) || !(self.heading_gain > 0.0) {
            return err("gains and speed bound must be positive".into());
        }
        for (name, t) in &self.timeouts {
            if Node::from_name(name).is_none() || !(*t > 0.0) {
                return err(format!("bad timeout entry {name}: {t}"));
            }
        }
        let first = &self.stages[0];
        if first.goals.is_empty() && first.transition.is_none() {
            return err("the first stage needs goals or a transition".into());
        }
        let mut layer = self.start_layer as i64;
        for (k, s) in self.stages.iter().enumerate() {
            if layer < 0 || layer as usize >= world.layer_count() {
                return err(format!("stage {k} is on layer {layer}, outside the tray stack"));
            }
            let l = layer as usize;
            let safe = |p: &Pose| h1(world, l, &p.position()) > 0.0 && h2(world, &p.position()) > 0.0;
            for g in &s.goals {
                if !safe(g) {
                    return err(format!("goal ({}, {}) of stage {k} is outside the safe set", g.x, g.y));
                }
            }
            if k > 0 && s.transition.is_some() && s.goals.is_empty() {
                return err(format!(
                    "stage {k} follows a transition and needs goals before its own transition"
                ));
            }
            if let Some(t) = &s.transition {
                if !safe(&t.waypoint) {
                    return err(format!("waypoint of stage {k} is outside the safe set"));
                }
                layer += match t.direction {
                    Direction::Down => -1,
                    Direction::Up => 1,
                };
            } else if k + 1 != self.stages.len() {
                return err(format!("stage {k} has no transition but is not the last stage"));
            }
        }
        if layer < 0 || layer as usize >= world.layer_count() {
            return err(format!("mission ends on layer {layer}, outside the tray stack"));
        }
        Ok(())
    }
}

/// Yaw offset of the search sweep: a triangle wave starting at zero and
/// rising to `amplitude` after a quarter period.
pub fn searching_command(t: f64, amplitude: f64, period: f64) -> f64 {
    let phase = (t / period).rem_euclid(1.0);
    let tri = if phase < 0.25 {
        4.0 * phase
    } else if phase < 0.75 {
        2.0 - 4.0 * phase
    } else {
        4.0 * phase - 4.0
    };
    amplitude * tri
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptionOutcome {
    Accepted,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionOutcome {
    Success,
    Failure,
}

/// Everything the state machine sees on one tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub base: BaseState,
    pub perception: Option<PerceptionOutcome>,
    /// Intermediate-motion playback finished.
    pub motion_done: bool,
    /// CoM guard result of the current intermediate-motion plan.
    pub com_guard: Option<bool>,
    pub transition: Option<TransitionOutcome>,
    pub planner_stuck: bool,
    pub filter_infeasible: bool,
}

impl Observation {
    pub fn idle(time: f64, base: BaseState) -> Self {
        Self {
            time,
            base,
            perception: None,
            motion_done: false,
            com_guard: None,
            transition: None,
            planner_stuck: false,
            filter_infeasible: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub tick: u64,
    pub from: Node,
    pub to: Node,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Directives {
    pub node: Node,
    pub filter_active: bool,
    pub gait_active: bool,
    /// Pose to drive to in locomotion nodes.
    pub target: Option<Pose>,
    /// Yaw offset of the search sweep, relative to the yaw at entry.
    pub sweep_offset: Option<f64>,
    pub acquire_perception: bool,
}

#[derive(Clone, Debug)]
pub struct MissionState {
    pub node: Node,
    pub stage: usize,
    pub layer: usize,
    pub queue: VecDeque<Pose>,
    pub goal: Option<Pose>,
    pub entry_time: f64,
}

#[derive(Clone, Debug)]
pub struct Mission {
    pub config: MissionConfig,
    pub state: MissionState,
}

impl Mission {
    pub fn new(config: MissionConfig) -> Self {
        let queue: VecDeque<Pose> = config.stages[0].goals.iter().copied().collect();
        let state = MissionState {
            node: Node::Searching,
            stage: 0,
            layer: config.start_layer,
            queue,
            goal: None,
            entry_time: 0.0,
        };
        Self { config, state }
    }

    pub fn node(&self) -> Node {
        self.state.node
    }

    pub fn stage(&self) -> &Stage {
        &self.config.stages[self.state.stage]
    }

    fn reached(&self, base: &BaseState, goal: &Pose, check_yaw: bool) -> bool {
        (base.position - goal.position()).norm() <= self.config.goal_tolerance
            && (!check_yaw || wrap_angle(base.yaw - goal.yaw).abs() <= self.config.yaw_tolerance)
    }

    pub fn directives(&self, time: f64) -> Directives {
        let node = self.state.node;
        Directives {
            node,
            filter_active: node.filter_active(),
            gait_active: node.gait_active(),
            target: self.state.goal,
            sweep_offset: (node == Node::Searching).then(|| {
                searching_command(
                    time - self.state.entry_time,
                    self.config.sweep_amplitude,
                    self.config.sweep_period,
                )
            }),
            acquire_perception: self.config.acquire_in.contains(&node),
        }
    }

    fn unexpected(&self, obs: &Observation) -> Option<&'static str> {
        let node = self.state.node;
        if obs.transition.is_some() && !node.is_transition() {
            return Some("transition outcome outside a transition");
        }
        let intermediate = matches!(node, Node::PreMotion | Node::PostMotion);
        if (obs.motion_done || obs.com_guard.is_some()) && !intermediate {
            return Some("intermediate-motion report outside an intermediate motion");
        }
        if obs.motion_done && obs.com_guard.is_none() {
            return Some("intermediate motion finished without a CoM guard result");
        }
        None
    }

    /// Advances the machine by one observation. Returns the transition taken,
    /// if any; self-transitions to the next inspection goal are reported too.
    pub fn step(&mut self, tick: u64, obs: &Observation) -> Option<TransitionRecord> {
        let from = self.state.node;
        if from.is_absorbing() {
            return None;
        }
        let (to, reason) = self.decide(obs)?;
        debug_assert!(Node::edge_allowed(from, to), "{from:?} -> {to:?}");
        self.enter(to, obs);
        Some(TransitionRecord { tick, from, to, reason })
    }

    /// Forces `Halted` from outside the observation loop.
    pub fn halt(&mut self, tick: u64, time: f64, reason: &str) -> Option<TransitionRecord> {
        let from = self.state.node;
        if from.is_absorbing() {
            return None;
        }
        self.state.node = Node::Halted;
        self.state.goal = None;
        self.state.entry_time = time;
        Some(TransitionRecord {
            tick,
            from,
            to: Node::Halted,
            reason: reason.to_string(),
        })
    }

    fn decide(&mut self, obs: &Observation) -> Option<(Node, String)> {
        let node = self.state.node;
        if obs.filter_infeasible {
            return Some((Node::Halted, "filter-infeasible".into()));
        }
        if obs.planner_stuck {
            return Some((Node::Halted, "planner-stuck".into()));
        }
        if let Some(why) = self.unexpected(obs) {
            return Some((Node::Halted, format!("unexpected observation: {why}")));
        }
        if obs.time - self.state.entry_time > self.config.timeout(node) {
            return Some((Node::Halted, "timeout".into()));
        }
        let transition = self.stage().transition.clone();
        match node {
            Node::Searching => match obs.perception {
                Some(PerceptionOutcome::Accepted) => {
                    if !self.state.queue.is_empty() {
                        Some((Node::LocomotionInspect, "manway accepted, goals pending".into()))
                    } else if transition.is_some() {
                        Some((Node::LocomotionToWaypoint, "manway accepted, goals done".into()))
                    } else {
                        Some((Node::Halted, "nothing left to do after search".into()))
                    }
                }
                _ => None,
            },
            Node::LocomotionInspect => {
                let goal = self.state.goal?;
                if !self.reached(&obs.base, &goal, false) {
                    return None;
                }
                if self.state.queue.len() > 1 {
                    Some((Node::LocomotionInspect, "goal reached, next goal".into()))
                } else if transition.is_some() {
                    Some((Node::Searching, "goals done, re-search".into()))
                } else {
                    Some((Node::LocomotionToSafe, "goals done".into()))
                }
            }
            Node::LocomotionToWaypoint => {
                let wp = transition?.waypoint;
                self.reached(&obs.base, &wp, true)
                    .then(|| (Node::LocomotionToManway, "waypoint reached".into()))
            }
            Node::LocomotionToManway => {
                let ready = transition?.ready;
                self.reached(&obs.base, &ready, true)
                    .then(|| (Node::PreMotion, "transition-ready pose reached".into()))
            }
            Node::PreMotion => match (obs.com_guard, obs.motion_done) {
                (Some(false), _) => Some((Node::Halted, "CoM guard failed".into())),
                (Some(true), true) => {
                    let next = match transition?.direction {
                        Direction::Up => Node::TransitionUp,
                        Direction::Down => Node::TransitionDown,
                    };
                    Some((next, "pre-motion executed".into()))
                }
                _ => None,
            },
            Node::TransitionUp | Node::TransitionDown => match obs.transition {
                Some(TransitionOutcome::Success) => Some((Node::PostMotion, "transition succeeded".into())),
                Some(TransitionOutcome::Failure) => Some((Node::Halted, "transition failed".into())),
                None => None,
            },
            Node::PostMotion => match (obs.com_guard, obs.motion_done) {
                (Some(false), _) => Some((Node::Halted, "CoM guard failed".into())),
                (Some(true), true) => {
                    let next = self.state.stage + 1;
                    if next < self.config.stages.len() && !self.config.stages[next].goals.is_empty() {
                        Some((Node::LocomotionInspect, "post-motion done, next layer goals".into()))
                    } else {
                        Some((Node::LocomotionToSafe, "post-motion done".into()))
                    }
                }
                _ => None,
            },
            Node::LocomotionToSafe => self
                .reached(&obs.base, &self.config.safe_location, false)
                .then(|| (Node::Done, "safe location reached".into())),
            Node::Halted | Node::Done => None,
        }
    }

    fn enter(&mut self, to: Node, obs: &Observation) {
        let from = self.state.node;
        match (from, to) {
            (Node::LocomotionInspect, _) => {
                self.state.queue.pop_front();
            }
            (Node::TransitionUp, Node::PostMotion) => self.state.layer += 1,
            (Node::TransitionDown, Node::PostMotion) => self.state.layer = self.state.layer.saturating_sub(1),
            (Node::PostMotion, _) => {
                self.state.stage = (self.state.stage + 1).min(self.config.stages.len() - 1);
                self.state.queue = self.stage().goals.iter().copied().collect();
            }
            _ => {}
        }
        self.state.goal = match to {
            Node::LocomotionInspect => self.state.queue.front().copied(),
            Node::LocomotionToWaypoint => self.stage().transition.as_ref().map(|t| t.waypoint),
            Node::LocomotionToManway => self.stage().transition.as_ref().map(|t| t.ready),
            Node::LocomotionToSafe => Some(self.config.safe_location),
            _ => None,
        };
        self.state.node = to;
        self.state.entry_time = obs.time;
    }
}
