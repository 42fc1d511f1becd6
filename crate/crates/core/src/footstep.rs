//! Quasi-static gait: one swing leg at a time in the order FL, BR, FR, BL.
//!
//! Swing targets come from a Raibert-style rule and are then replanned so
//! that every foothold stays inside the `r_p - epsilon` disk and outside the
//! manway rectangle inflated by the buffer margin.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rect_contains, rotation2, BaseState, TrayWorld, VelocityCommand};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Leg {
    FL,
    FR,
    BL,
    BR,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FL, Leg::FR, Leg::BL, Leg::BR];

    pub fn index(self) -> usize {
        match self {
            Leg::FL => 0,
            Leg::FR => 1,
            Leg::BL => 2,
            Leg::BR => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Leg::FL => "FL",
            Leg::FR => "FR",
            Leg::BL => "BL",
            Leg::BR => "BR",
        }
    }
}

/// Swing order of the four gait phases.
pub const GAIT_ORDER: [Leg; 4] = [Leg::FL, Leg::BR, Leg::FR, Leg::BL];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitParams {
    /// Nominal hip positions in the base frame, indexed by [`Leg::index`].
    pub hip_offsets: [[f64; 2]; 4],
    pub swing_time: f64,
    pub pause: f64,
    pub apex_height: f64,
    pub k_raibert: f64,
    pub reach: f64,
    pub shrink: f64,
    /// How far the CoM may shift from the base toward the stance centroid.
    pub max_sway: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            hip_offsets: [[0.18, 0.13], [0.18, -0.13], [-0.18, 0.13], [-0.18, -0.13]],
            swing_time: 0.4,
            pause: 0.1,
            apex_height: 0.06,
            k_raibert: 0.3,
            reach: 0.18,
            shrink: 0.03,
            max_sway: 0.1,
        }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("swing_time", self.swing_time), ("reach", self.reach)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive (got {v})")));
            }
        }
        for (name, v) in [
            ("pause", self.pause),
            ("apex_height", self.apex_height),
            ("k_raibert", self.k_raibert),
            ("shrink", self.shrink),
            ("max_sway", self.max_sway),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative (got {v})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplanReason {
    None,
    Manway,
    Edge,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FootTarget {
    pub nominal: Vector2<f64>,
    pub replanned: Vector2<f64>,
    pub reason: ReplanReason,
}

pub fn hip_projection(base: &BaseState, leg: Leg, params: &GaitParams) -> Vector2<f64> {
    let [x, y] = params.hip_offsets[leg.index()];
    base.position + rotation2(base.yaw) * Vector2::new(x, y)
}

/// `p_g = hip + k_rai * nu`.
pub fn raibert_target(base: &BaseState, cmd: &VelocityCommand, leg: Leg, params: &GaitParams) -> Vector2<f64> {
    hip_projection(base, leg, params) + params.k_raibert * cmd.linear
}

/// Scales a point outside the safe disk back onto its boundary along the
/// ray from the tray center.
pub fn replan_edge(world: &TrayWorld, p: &Vector2<f64>) -> Vector2<f64> {
    let c = world.tray_center();
    let r = world.safe_radius();
    let d = (p - c).norm();
    // the tolerance keeps the map idempotent under rounding
    if d > r * (1.0 + 1e-12) {
        c + (r / d) * (p - c)
    } else {
        *p
    }
}

const OUTWARD_NUDGE: f64 = 1e-6;

/// Pushes a point inside the inflated manway rectangle to the nearest side
/// that yields a safe foothold after the edge pass.
pub fn replan_manway(world: &TrayWorld, layer: usize, p: &Vector2<f64>) -> Result<Vector2<f64>> {
    let manway = world.manway(layer);
    let margin = world.buffer_margin();
    if !rect_contains(manway, margin, p) {
        return Ok(*p);
    }
    let local = manway.to_local(p);
    let half = manway.half_extents(margin);
    let mut sides = [
        (half.x - local.x, Vector2::new(half.x + OUTWARD_NUDGE, local.y)),
        (half.x + local.x, Vector2::new(-half.x - OUTWARD_NUDGE, local.y)),
        (half.y - local.y, Vector2::new(local.x, half.y + OUTWARD_NUDGE)),
        (half.y + local.y, Vector2::new(local.x, -half.y - OUTWARD_NUDGE)),
    ];
    sides.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, candidate) in sides {
        let q = replan_edge(world, &manway.from_local(&candidate));
        if world.foothold_safe(layer, &q) {
            return Ok(q);
        }
    }
    Err(Error::PlannerStuck { x: p.x, y: p.y })
}

/// Edge pass followed by the manway pass.
pub fn replan_foothold(world: &TrayWorld, layer: usize, nominal: &Vector2<f64>) -> Result<FootTarget> {
    let edged = replan_edge(world, nominal);
    let moved_edge = edged != *nominal;
    let replanned = replan_manway(world, layer, &edged)?;
    let moved_manway = replanned != edged;
    let reason = match (moved_manway, moved_edge) {
        (false, false) => ReplanReason::None,
        (true, false) => ReplanReason::Manway,
        (false, true) => ReplanReason::Edge,
        (true, true) => ReplanReason::Both,
    };
    Ok(FootTarget {
        nominal: *nominal,
        replanned,
        reason,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SupportCheck {
    pub inside: bool,
    pub degenerate: bool,
}

/// Whether `com` lies in the stance triangle with every edge moved inward
/// by `shrink`.
pub fn support_polygon_check(stance: &[Vector2<f64>; 3], com: &Vector2<f64>, shrink: f64) -> SupportCheck {
    let [a, b, c] = *stance;
    let cross = |u: Vector2<f64>, v: Vector2<f64>| u.x * v.y - u.y * v.x;
    let area2 = cross(b - a, c - a);
    if area2.abs() < 1e-12 {
        return SupportCheck {
            inside: false,
            degenerate: true,
        };
    }
    let sign = area2.signum();
    let inside = [(a, b), (b, c), (c, a)].iter().all(|&(p, q)| {
        let e = q - p;
        // signed distance to the edge line, positive toward the interior
        sign * cross(e, com - p) / e.norm() >= shrink
    });
    SupportCheck {
        inside,
        degenerate: false,
    }
}

pub fn kinematic_feasible(base: &BaseState, leg: Leg, p: &Vector2<f64>, params: &GaitParams) -> bool {
    (p - hip_projection(base, leg, params)).norm() <= params.reach
}

fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

/// Foot position at time `t` of a swing from `start` to `end`.
pub fn swing_trajectory(
    start: &Vector2<f64>,
    end: &Vector2<f64>,
    apex_height: f64,
    swing_time: f64,
    t: f64,
) -> Result<Vector3<f64>> {
    if !(swing_time > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "swing time must be positive (got {swing_time})"
        )));
    }
    let tau = (t / swing_time).clamp(0.0, 1.0);
    let xy = start + (end - start) * smoothstep(tau);
    let z = if tau <= 0.5 {
        apex_height * smoothstep(2.0 * tau)
    } else {
        apex_height * smoothstep(2.0 - 2.0 * tau)
    };
    Ok(Vector3::new(xy.x, xy.y, z))
}

/// CoM estimate used for the support check: the body sways from the base
/// toward the stance centroid by at most `max_sway`.
pub fn swayed_com(base: &Vector2<f64>, stance: &[Vector2<f64>; 3], max_sway: f64) -> Vector2<f64> {
    let centroid = (stance[0] + stance[1] + stance[2]) / 3.0;
    let d = centroid - base;
    let n = d.norm();
    if n <= max_sway {
        centroid
    } else {
        base + d * (max_sway / n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FootEventKind {
    Lift,
    Land,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FootEvent {
    pub kind: FootEventKind,
    pub leg: Leg,
    pub position: [f64; 2],
    pub nominal: [f64; 2],
    pub reason: ReplanReason,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Swing {
    pub leg: Leg,
    pub start: Vector2<f64>,
    pub target: FootTarget,
    pub elapsed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HoldReason {
    Support,
    Kinematic,
    Unsafe,
}

/// Gait phase machine. Owned by the tick loop.
#[derive(Clone, Debug)]
pub struct GaitState {
    pub params: GaitParams,
    /// World-frame stance positions, indexed by [`Leg::index`].
    pub feet: [Vector2<f64>; 4],
    pub phase: usize,
    pub swing: Option<Swing>,
    pub pause_left: f64,
    pub holding: Option<HoldReason>,
    pub lifts: usize,
    pub holds: usize,
}

impl GaitState {
    /// Feet at the nominal stance under `base`.
    pub fn new(base: &BaseState, params: GaitParams) -> Self {
        let feet = Leg::ALL.map(|l| hip_projection(base, l, &params));
        Self::with_feet(feet, params)
    }

    pub fn with_feet(feet: [Vector2<f64>; 4], params: GaitParams) -> Self {
        Self {
            params,
            feet,
            phase: 0,
            swing: None,
            pause_left: params.pause,
            holding: None,
            lifts: 0,
            holds: 0,
        }
    }

    pub fn current_leg(&self) -> Leg {
        GAIT_ORDER[self.phase]
    }

    pub fn swing_leg(&self) -> Option<Leg> {
        self.swing.map(|s| s.leg)
    }

    fn stance_without(&self, leg: Leg) -> [Vector2<f64>; 3] {
        let mut out = [Vector2::zeros(); 3];
        let mut k = 0;
        for l in Leg::ALL {
            if l != leg {
                out[k] = self.feet[l.index()];
                k += 1;
            }
        }
        out
    }

    /// Plans the next swing target; `Err` carries the reason to hold.
    fn plan_swing(
        &self,
        world: &TrayWorld,
        base: &BaseState,
        cmd: &VelocityCommand,
    ) -> std::result::Result<FootTarget, HoldReason> {
        let leg = self.current_leg();
        let p = &self.params;
        let stance = self.stance_without(leg);
        let com = swayed_com(&base.position, &stance, p.max_sway);
        if !support_polygon_check(&stance, &com, p.shrink).inside {
            return Err(HoldReason::Support);
        }
        let nominal = raibert_target(base, cmd, leg, p);
        let mut target = replan_foothold(world, base.layer, &nominal).map_err(|_| HoldReason::Unsafe)?;
        if !kinematic_feasible(base, leg, &target.replanned, p) {
            let hip = hip_projection(base, leg, p);
            let d = target.replanned - hip;
            let pulled = hip + d * (p.reach * (1.0 - 1e-9) / d.norm());
            let again = replan_foothold(world, base.layer, &pulled).map_err(|_| HoldReason::Unsafe)?;
            if !kinematic_feasible(base, leg, &again.replanned, p) {
                return Err(HoldReason::Kinematic);
            }
            target = FootTarget {
                nominal,
                replanned: again.replanned,
                reason: if again.reason == ReplanReason::None {
                    target.reason
                } else {
                    again.reason
                },
            };
        }
        if !world.foothold_safe(base.layer, &target.replanned) {
            return Err(HoldReason::Unsafe);
        }
        Ok(target)
    }

    /// Advances the gait by `dt`. Lift and land events are returned in order.
    pub fn tick(&mut self, world: &TrayWorld, base: &BaseState, cmd: &VelocityCommand, dt: f64) -> Vec<FootEvent> {
        let mut events = Vec::new();
        if let Some(mut s) = self.swing {
            s.elapsed += dt;
            if s.elapsed >= self.params.swing_time - 1e-12 {
                self.feet[s.leg.index()] = s.target.replanned;
                self.swing = None;
                self.phase = (self.phase + 1) % 4;
                self.pause_left = self.params.pause;
                events.push(FootEvent {
                    kind: FootEventKind::Land,
                    leg: s.leg,
                    position: [s.target.replanned.x, s.target.replanned.y],
                    nominal: [s.target.nominal.x, s.target.nominal.y],
                    reason: s.target.reason,
                });
            } else {
                self.swing = Some(s);
            }
            return events;
        }
        if self.pause_left > 1e-12 {
            self.pause_left -= dt;
            return events;
        }
        match self.plan_swing(world, base, cmd) {
            Ok(target) => {
                let leg = self.current_leg();
                self.holding = None;
                self.lifts += 1;
                self.swing = Some(Swing {
                    leg,
                    start: self.feet[leg.index()],
                    target,
                    elapsed: 0.0,
                });
                events.push(FootEvent {
                    kind: FootEventKind::Lift,
                    leg,
                    position: [target.replanned.x, target.replanned.y],
                    nominal: [target.nominal.x, target.nominal.y],
                    reason: target.reason,
                });
            }
            Err(reason) => {
                if self.holding.is_none() {
                    self.holds += 1;
                }
                self.holding = Some(reason);
            }
        }
        events
    }

    /// Current 3D position of the swing foot, if any.
    pub fn swing_position(&self) -> Option<Vector3<f64>> {
        self.swing.map(|s| {
            swing_trajectory(
                &s.start,
                &s.target.replanned,
                self.params.apex_height,
                self.params.swing_time,
                s.elapsed,
            )
            .expect("swing time validated")
        })
    }
}
