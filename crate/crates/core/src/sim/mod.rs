//! Deterministic tick-loop simulator tying the mission, safety filter, gait,
//! perception and intermediate motions together.

mod config;
mod invariants;
mod trace;

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{Fault, SimConfig};
pub use invariants::{check_invariants, InvariantReport};
pub use trace::{
    read_jsonl, read_trace, FootEventRecord, PlanningWorld, SimEvent, Summary, TraceRecord, TraceWriter, WorldRecord,
    EVENTS_FILE, PERCEPTION_FILE, SUMMARY_FILE, TRACE_FILE, TRACE_HEADER, TRANSITIONS_FILE, WORLD_FILE,
};

use crate::body::{JointTrajectory, PlanarComposite, TrajectoryKnot};
use crate::contact::{
    com_guard, plan_contacts, post_motion_problem, pre_motion_problem, stitch_trajectories, PlannerSettings,
    StitchedTrajectory,
};
use crate::error::{Error, Result};
use crate::footstep::{hip_projection, replan_foothold, FootEvent, FootEventKind, GaitState, Leg, ReplanReason};
use crate::geometry::{wrap_angle, BaseState, TrayWorld, VelocityCommand, WorldConfig};
use crate::mission::{
    Direction, Mission, MissionConfig, Node, Observation, PerceptionOutcome, Pose, TransitionOutcome,
};
use crate::perception::{
    average_vertices, validate_manway, MeasurementRecord, PerceptionFrame, SimulatedSensor, ValidationTolerances,
    VertexMeasurement,
};
use crate::safety::{h1, h2, heading_rate, BarrierSpec, FilterSettings, FilterStatus, ReducedModel, SafetyFilter};

/// Euler step of the planar base: `phi += nu dt`, yaw wrapped to (-pi, pi].
pub fn integrate_base(state: &BaseState, cmd: &VelocityCommand, dt: f64) -> BaseState {
    BaseState {
        position: state.position + cmd.linear * dt,
        yaw: wrap_angle(state.yaw + cmd.yaw_rate * dt),
        layer: state.layer,
    }
}

/// Base integrator with an optional first-order lag on the linear velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseIntegrator {
    pub time_constant: Option<f64>,
    pub applied: Vector2<f64>,
}

impl BaseIntegrator {
    pub fn new(time_constant: Option<f64>) -> Self {
        Self {
            time_constant,
            applied: Vector2::zeros(),
        }
    }

    pub fn step(&mut self, state: &BaseState, cmd: &VelocityCommand, dt: f64) -> BaseState {
        self.applied = match self.time_constant {
            Some(tau) => {
                let a = 1.0 - (-dt / tau).exp();
                self.applied + (cmd.linear - self.applied) * a
            }
            None => cmd.linear,
        };
        integrate_base(
            state,
            &VelocityCommand {
                linear: self.applied,
                yaw_rate: cmd.yaw_rate,
            },
            dt,
        )
    }

    pub fn reset(&mut self) {
        self.applied = Vector2::zeros();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Done,
    Halted,
}

impl ExitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitStatus::Done => "done",
            ExitStatus::Halted => "halted",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub summary: Summary,
}

/// Straight-line base playback between two layers. Knot layout is
/// `[x, y, z, yaw]`; any further entries are joint angles and are ignored.
pub fn default_transition(from: &Pose, to: &Pose, z_from: f64, z_to: f64, duration: f64) -> Result<JointTrajectory> {
    if !(duration > 0.0) {
        return Err(Error::Config(format!(
            "transition duration must be positive (got {duration})"
        )));
    }
    let dyaw = wrap_angle(to.yaw - from.yaw);
    let qd = vec![
        (to.x - from.x) / duration,
        (to.y - from.y) / duration,
        (z_to - z_from) / duration,
        dyaw / duration,
    ];
    JointTrajectory::new(vec![
        TrajectoryKnot {
            t: 0.0,
            q: vec![from.x, from.y, z_from, from.yaw],
            qd: qd.clone(),
        },
        TrajectoryKnot {
            t: duration,
            q: vec![to.x, to.y, z_to, from.yaw + dyaw],
            qd,
        },
    ])
}

struct Intermediate {
    traj: StitchedTrajectory,
    guard: bool,
    start: f64,
}

struct Playback {
    traj: JointTrajectory,
    start: f64,
    from_layer: usize,
    to_layer: usize,
    landing: Pose,
}

#[derive(Default)]
struct Pending {
    perception: Option<PerceptionOutcome>,
    transition: Option<TransitionOutcome>,
    filter_infeasible: bool,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    truth: TrayWorld,
    planning: TrayWorld,
    world_record: WorldRecord,
    mission: Mission,
    base: BaseState,
    integrator: BaseIntegrator,
    gait: GaitState,
    filter: Option<SafetyFilter>,
    rng: ChaCha8Rng,
    sensor: Option<SimulatedSensor>,
    samples: Vec<VertexMeasurement>,
    sweep_yaw: f64,
    intermediate: Option<Intermediate>,
    playback: Option<Playback>,
    pending: Pending,
    hold_since: Option<f64>,
    out: TraceWriter,
    footholds: usize,
    transitions: usize,
    layer_changes: usize,
    min_h: [Option<f64>; 2],
    last_reason: Option<String>,
}

fn foot_event(tick: u64, layer: usize, e: &FootEvent) -> SimEvent {
    SimEvent::Foot {
        tick,
        layer,
        foot: FootEventRecord::from(e),
    }
}

impl<'a> Sim<'a> {
    fn place_feet(&mut self, tick: u64) -> Result<()> {
        let mut feet = [Vector2::zeros(); 4];
        for leg in Leg::ALL {
            let nominal = hip_projection(&self.base, leg, &self.cfg.gait);
            let target = replan_foothold(&self.planning, self.base.layer, &nominal)?;
            feet[leg.index()] = target.replanned;
            self.out.event(&SimEvent::Foot {
                tick,
                layer: self.base.layer,
                foot: FootEventRecord {
                    kind: "place".into(),
                    leg: leg.name().into(),
                    position: [target.replanned.x, target.replanned.y],
                    nominal: [nominal.x, nominal.y],
                    reason: match target.reason {
                        ReplanReason::None => "none",
                        ReplanReason::Manway => "manway",
                        ReplanReason::Edge => "edge",
                        ReplanReason::Both => "both",
                    }
                    .into(),
                },
            })?;
            self.footholds += 1;
        }
        self.gait.feet = feet;
        self.gait.swing = None;
        self.gait.holding = None;
        Ok(())
    }

    fn observation(&self, time: f64) -> Observation {
        let node = self.mission.node();
        let mut obs = Observation::idle(time, self.base);
        obs.perception = self.pending.perception;
        obs.transition = self.pending.transition;
        obs.filter_infeasible = self.pending.filter_infeasible;
        if let Some(im) = &self.intermediate {
            obs.com_guard = Some(im.guard);
            obs.motion_done = time - im.start >= im.traj.duration() - 1e-9;
        }
        obs.planner_stuck = node.gait_active() && self.hold_since.is_some_and(|t0| time - t0 > self.cfg.stuck_after);
        obs
    }

    fn enter(&mut self, node: Node, tick: u64, time: f64) -> Result<()> {
        self.hold_since = None;
        self.intermediate = None;
        match node {
            Node::Searching => {
                self.sweep_yaw = self.base.yaw;
                self.samples.clear();
                let truth = self.truth.manway(self.base.layer);
                self.sensor = Some(SimulatedSensor::for_manway(
                    truth,
                    self.cfg.noise_sigma,
                    self.rng.next_u64(),
                )?);
            }
            Node::LocomotionInspect | Node::LocomotionToWaypoint => {
                let barriers =
                    BarrierSpec::pair(&self.planning, self.base.layer, self.cfg.gamma[0], self.cfg.gamma[1])?;
                let model = ReducedModel::symmetric(self.mission.config.max_speed)?;
                let settings = FilterSettings {
                    dt: self.cfg.dt,
                    ..FilterSettings::default()
                };
                self.filter = Some(SafetyFilter::new(model, barriers, settings));
            }
            Node::PreMotion | Node::PostMotion => {
                let h = self.mission.config.contact_horizon;
                let problem = if node == Node::PreMotion {
                    pre_motion_problem(h)?
                } else {
                    post_motion_problem(h)?
                };
                let report = plan_contacts(&problem, &PlannerSettings::default())?;
                let traj = stitch_trajectories(&report.plan, self.mission.config.contact_step_duration)?;
                let guard = com_guard(
                    &traj,
                    &PlanarComposite::default(),
                    self.cfg.com_shrink,
                    self.cfg.com_samples,
                );
                self.out.event(&SimEvent::ContactPlan {
                    tick,
                    node: node.name().into(),
                    pattern: report.plan.pattern.clone(),
                    objective: report.plan.objective,
                    com_guard: guard,
                })?;
                self.intermediate = Some(Intermediate {
                    traj,
                    guard,
                    start: time,
                });
            }
            Node::TransitionUp | Node::TransitionDown => {
                let plan = self
                    .mission
                    .stage()
                    .transition
                    .clone()
                    .ok_or_else(|| Error::Config("transition node without a transition plan".into()))?;
                let from_layer = self.base.layer;
                let to_layer = match plan.direction {
                    Direction::Down => from_layer.checked_sub(1),
                    Direction::Up => Some(from_layer + 1).filter(|l| *l < self.truth.layer_count()),
                }
                .ok_or_else(|| Error::Config(format!("no layer to transition to from layer {from_layer}")))?;
                let z = |l: usize| self.truth.manway(l).vertices()[0].z;
                let traj = match &plan.trajectory {
                    Some(path) => JointTrajectory::load(Path::new(path))?,
                    None => default_transition(&plan.ready, &plan.landing, z(from_layer), z(to_layer), plan.duration)?,
                };
                if traj.dim() < 4 {
                    return Err(Error::Config(
                        "transition trajectory needs at least x, y, z, yaw".into(),
                    ));
                }
                self.playback = Some(Playback {
                    start: time,
                    traj,
                    from_layer,
                    to_layer,
                    landing: plan.landing,
                });
            }
            _ => {}
        }
        if !node.gait_active() {
            self.integrator.reset();
        }
        Ok(())
    }

    fn perceive(&mut self, tick: u64) -> Result<()> {
        let layer = self.base.layer;
        let z = self.truth.manway(layer).vertices()[0].z + self.cfg.camera_height;
        let frame = PerceptionFrame::from_yaw(
            self.base.yaw,
            Vector3::new(self.base.position.x, self.base.position.y, z),
        );
        let sensor = self.sensor.as_mut().expect("sensor created on entry");
        let m = sensor.measure(&frame);
        self.out.measurement(&MeasurementRecord::new(tick, &m, &frame))?;
        self.samples.push(m.to_global(&frame));
        if self.samples.len() < self.mission.config.perception_samples {
            return Ok(());
        }
        let avg = average_vertices(&self.samples)?;
        self.samples.clear();
        let truth = self.truth.manway(layer);
        let outcome = match validate_manway(
            &avg,
            truth.long_side(),
            truth.short_side(),
            &ValidationTolerances::default(),
        ) {
            Ok(rect) => {
                self.planning = self.planning.with_perceived_manway(layer, rect)?;
                self.world_record.planning.push(PlanningWorld {
                    tick,
                    world: self.planning.to_config(),
                });
                (PerceptionOutcome::Accepted, String::new())
            }
            Err(rejection) => (PerceptionOutcome::Rejected, rejection.to_string()),
        };
        self.out.event(&SimEvent::Perception {
            tick,
            layer,
            outcome: if outcome.0 == PerceptionOutcome::Accepted {
                "accepted"
            } else {
                "rejected"
            }
            .into(),
            detail: outcome.1,
        })?;
        self.pending.perception = Some(outcome.0);
        Ok(())
    }

    fn drive(&mut self, target: &Pose, filtered: bool) -> VelocityCommand {
        let cfg = &self.mission.config;
        let k_d = (target.position() - self.base.position) * cfg.position_gain;
        let yaw_rate = heading_rate(self.base.yaw, target.yaw, cfg.heading_gain, cfg.max_heading_rate);
        let linear = if filtered {
            let f = self.filter.as_mut().expect("filter built on entry");
            let (cmd, diag) = f.filter_nominal(&k_d, &self.base.position);
            if diag.status == FilterStatus::FilterInfeasible {
                self.pending.filter_infeasible = true;
            }
            cmd.linear
        } else {
            ReducedModel::symmetric(cfg.max_speed)
                .expect("validated speed")
                .clamp(&k_d)
        };
        VelocityCommand { linear, yaw_rate }
    }

    fn stance_within_reach(&self, base: &BaseState) -> bool {
        let swing = self.gait.swing_leg();
        Leg::ALL.iter().filter(|l| Some(**l) != swing).all(|l| {
            (self.gait.feet[l.index()] - hip_projection(base, *l, &self.cfg.gait)).norm() <= self.cfg.stance_reach
        })
    }

    /// Largest fraction of `cmd` that keeps every stance foot within reach
    /// after one tick. Zero when the feet are already out of reach.
    fn workspace_scale(&self, cmd: &VelocityCommand) -> f64 {
        let dt = self.cfg.dt;
        let ok = |a: f64| {
            let scaled = VelocityCommand {
                linear: cmd.linear * a,
                yaw_rate: cmd.yaw_rate * a,
            };
            self.stance_within_reach(&integrate_base(&self.base, &scaled, dt))
        };
        if ok(1.0) {
            return 1.0;
        }
        if !ok(0.0) {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Runs the current node for one tick and returns the command applied.
    fn act(&mut self, tick: u64, time: f64) -> Result<VelocityCommand> {
        let node = self.mission.node();
        let dt = self.cfg.dt;
        let directives = self.mission.directives(time);
        let mut cmd = VelocityCommand::default();
        match node {
            Node::Searching => {
                let target = self.sweep_yaw + directives.sweep_offset.unwrap_or(0.0);
                cmd.yaw_rate = wrap_angle(target - self.base.yaw) / dt;
            }
            n if n.gait_active() => {
                let target = directives.target.expect("locomotion nodes carry a target");
                cmd = self.drive(&target, directives.filter_active);
                let a = self.workspace_scale(&cmd);
                cmd.linear *= a;
                cmd.yaw_rate *= a;
            }
            Node::TransitionUp | Node::TransitionDown => {
                let pb = self.playback.as_ref().expect("playback built on entry");
                let elapsed = time + dt - pb.start;
                let (q, qd) = pb.traj.sample(pb.traj.start_time() + elapsed);
                cmd = VelocityCommand::new(qd[0], qd[1], qd[3]);
                self.base.position = Vector2::new(q[0], q[1]);
                self.base.yaw = wrap_angle(q[3]);
                if elapsed >= pb.traj.duration() - 1e-9 {
                    let pb = self.playback.take().expect("checked above");
                    let failed = self.cfg.transition_fails(pb.from_layer);
                    self.out.event(&SimEvent::Transition {
                        tick,
                        from_layer: pb.from_layer,
                        outcome: if failed { "failure" } else { "success" }.into(),
                    })?;
                    if failed {
                        self.pending.transition = Some(TransitionOutcome::Failure);
                    } else {
                        self.pending.transition = Some(TransitionOutcome::Success);
                        self.base = BaseState::new(pb.landing.x, pb.landing.y, wrap_angle(pb.landing.yaw), pb.to_layer);
                        self.layer_changes += 1;
                        self.place_feet(tick)?;
                    }
                }
                return Ok(cmd);
            }
            _ => {}
        }
        if directives.acquire_perception {
            self.perceive(tick)?;
        }
        let next = self.integrator.step(&self.base, &cmd, dt);
        if directives.gait_active || self.gait.swing.is_some() {
            let gait_cmd = if directives.gait_active {
                cmd
            } else {
                VelocityCommand::default()
            };
            let events = self.gait.tick(&self.planning, &self.base, &gait_cmd, dt);
            for e in &events {
                if e.kind == FootEventKind::Land {
                    self.footholds += 1;
                }
                self.out.event(&foot_event(tick, self.base.layer, e))?;
            }
            match self.gait.holding {
                Some(_) if directives.gait_active => {
                    self.hold_since.get_or_insert(time);
                }
                _ => self.hold_since = None,
            }
        }
        self.base = next;
        Ok(cmd)
    }

    fn record(&mut self, tick: u64, pose: &BaseState, cmd: &VelocityCommand) -> Result<()> {
        let node = self.mission.node();
        let layer = pose.layer;
        let phi = pose.position;
        let (v1, v2) = (h1(&self.planning, layer, &phi), h2(&self.planning, &phi));
        let filter = node.filter_active();
        if filter {
            self.min_h[0] = Some(self.min_h[0].map_or(v1, |m| m.min(v1)));
            self.min_h[1] = Some(self.min_h[1].map_or(v2, |m| m.min(v2)));
        }
        let mut feet = self.gait.feet;
        let swing = self.gait.swing_leg();
        if let (Some(leg), Some(p)) = (swing, self.gait.swing_position()) {
            feet[leg.index()] = Vector2::new(p.x, p.y);
        }
        self.out.row(&TraceRecord {
            tick,
            node: node.name().into(),
            layer,
            x: phi.x,
            y: phi.y,
            yaw: pose.yaw,
            vx: cmd.linear.x,
            vy: cmd.linear.y,
            h1: v1,
            h2: v2,
            filter: filter as u8,
            fl_x: feet[0].x,
            fl_y: feet[0].y,
            fr_x: feet[1].x,
            fr_y: feet[1].y,
            bl_x: feet[2].x,
            bl_y: feet[2].y,
            br_x: feet[3].x,
            br_y: feet[3].y,
            swing: swing.map(|l| l.name().to_string()).unwrap_or_default(),
            zone: node.zone().into(),
        })
    }
}

/// Runs the mission to `Done` or `Halted`, writing the trace and side files
/// into `out`.
pub fn run_mission(world: &WorldConfig, mission: &MissionConfig, sim: &SimConfig, out: &Path) -> Result<RunOutcome> {
    sim.validate()?;
    let truth = world.build()?;
    mission.validate(&truth)?;
    let start = BaseState::new(
        mission.start.x,
        mission.start.y,
        wrap_angle(mission.start.yaw),
        mission.start_layer,
    );
    let writer = TraceWriter::create(out)?;
    let mut s = Sim {
        cfg: sim,
        planning: truth.clone(),
        world_record: WorldRecord {
            truth: world.clone(),
            planning: Vec::new(),
        },
        truth,
        mission: Mission::new(mission.clone()),
        base: start,
        integrator: BaseIntegrator::new(sim.lag.then_some(sim.lag_time_constant)),
        gait: GaitState::new(&start, sim.gait),
        filter: None,
        rng: ChaCha8Rng::seed_from_u64(sim.seed),
        sensor: None,
        samples: Vec::new(),
        sweep_yaw: start.yaw,
        intermediate: None,
        playback: None,
        pending: Pending::default(),
        hold_since: None,
        out: writer,
        footholds: 0,
        transitions: 0,
        layer_changes: 0,
        min_h: [None, None],
        last_reason: None,
    };
    s.place_feet(0)?;
    s.enter(Node::Searching, 0, 0.0)?;
    let mut tick = 0u64;
    loop {
        let time = tick as f64 * sim.dt;
        let obs = s.observation(time);
        let mut record = s.mission.step(tick, &obs);
        if record.is_none() && tick + 1 >= sim.max_ticks {
            record = s.mission.halt(tick, time, "tick budget exhausted");
        }
        s.pending = Pending::default();
        if let Some(r) = &record {
            s.out.transition(r)?;
            s.transitions += 1;
            s.last_reason = Some(r.reason.clone());
            if !r.to.is_absorbing() {
                s.enter(r.to, tick, time)?;
            }
        }
        let pose = s.base;
        if s.mission.node().is_absorbing() {
            s.record(tick, &pose, &VelocityCommand::default())?;
            break;
        }
        let cmd = s.act(tick, time)?;
        s.record(tick, &pose, &cmd)?;
        tick += 1;
    }
    let node = s.mission.node();
    let status = if node == Node::Done {
        ExitStatus::Done
    } else {
        ExitStatus::Halted
    };
    let halt_reason = if status == ExitStatus::Halted {
        s.last_reason.clone()
    } else {
        None
    };
    let summary = Summary {
        status: status.as_str().into(),
        final_node: node.name().into(),
        halt_reason,
        ticks: tick + 1,
        sim_time: tick as f64 * sim.dt,
        start_layer: mission.start_layer,
        final_layer: s.base.layer,
        layer_changes: s.layer_changes,
        footholds: s.footholds,
        transitions: s.transitions,
        min_h1_filter: s.min_h[0],
        min_h2_filter: s.min_h[1],
    };
    let Sim {
        out: writer,
        world_record,
        ..
    } = s;
    writer.finish(out, &world_record, &summary)?;
    Ok(RunOutcome { status, summary })
}
