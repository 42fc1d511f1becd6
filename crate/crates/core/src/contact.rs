//! Contact sequences for the intermediate motions around a transition.
//!
//! The configuration is the planar contact offset of each limb in the body
//! frame, `q = [wheel, FL, FR, BL, BR]` with two entries per limb (see
//! [`PlanarComposite`]). At each step `j` every limb carries an integer
//! `c_i`: a nonzero value places the limb at its transition-ready value
//! `S_i q_t`, a zero value keeps it where it was at step `j - 1` (the initial
//! configuration before step 1). Step sums are 0 at the first and last step
//! and 2 in between.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::body::{JointTrajectory, Limb, PlanarComposite, TrajectoryKnot};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::qp::{
    enumerate_miqp, solve_miqp, CouplingRule, MiqpProblem, MiqpResult, MiqpSettings, MiqpStatus, QpProblem, QpSettings,
};

pub const LIMBS: usize = 5;
pub const LIMB_DIM: usize = 2;
pub const CONFIG_DIM: usize = LIMBS * LIMB_DIM;
/// Admissible nonzero value per limb, in [`Limb::ALL`] order.
pub const CONTACT_VALUE: [i64; LIMBS] = [2, 1, 1, 2, 2];
/// Weight on intermediate configurations pulling them toward the target.
pub const REGULARIZATION: f64 = 1e-6;
const PIN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ContactSequenceProblem {
    pub horizon: usize,
    pub initial: DVector<f64>,
    pub target: DVector<f64>,
    pub weight: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContactProblemJson {
    pub horizon: usize,
    pub initial: Vec<f64>,
    pub target: Vec<f64>,
    #[serde(default)]
    pub weight: Option<Vec<Vec<f64>>>,
}

impl ContactSequenceProblem {
    pub fn new(horizon: usize, initial: DVector<f64>, target: DVector<f64>) -> Result<Self> {
        let p = Self {
            horizon,
            initial,
            target,
            weight: DMatrix::identity(CONFIG_DIM, CONFIG_DIM),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_weight(mut self, weight: DMatrix<f64>) -> Result<Self> {
        self.weight = weight;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 3 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at least 3 (got {})",
                self.horizon
            )));
        }
        if self.initial.len() != CONFIG_DIM || self.target.len() != CONFIG_DIM {
            return Err(Error::InvalidParameter(format!(
                "configurations must have {CONFIG_DIM} entries"
            )));
        }
        if self.weight.shape() != (CONFIG_DIM, CONFIG_DIM) {
            return Err(Error::InvalidParameter("weight must be 10x10".into()));
        }
        let sym = (&self.weight + self.weight.transpose()) * 0.5;
        if (&self.weight - &sym).amax() > 1e-10 || sym.symmetric_eigenvalues().min() < -1e-10 {
            return Err(Error::InvalidParameter("weight must be symmetric PSD".into()));
        }
        Ok(())
    }

    pub fn from_json(j: &ContactProblemJson) -> Result<Self> {
        let p = Self::new(
            j.horizon,
            DVector::from_column_slice(&j.initial),
            DVector::from_column_slice(&j.target),
        )?;
        match &j.weight {
            None => Ok(p),
            Some(rows) => {
                if rows.len() != CONFIG_DIM || rows.iter().any(|r| r.len() != CONFIG_DIM) {
                    return Err(Error::InvalidParameter("weight must be 10x10".into()));
                }
                p.with_weight(DMatrix::from_fn(CONFIG_DIM, CONFIG_DIM, |i, k| rows[i][k]))
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let j: ContactProblemJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_json(&j)
    }

    pub fn to_json(&self) -> ContactProblemJson {
        ContactProblemJson {
            horizon: self.horizon,
            initial: self.initial.as_slice().to_vec(),
            target: self.target.as_slice().to_vec(),
            weight: Some(
                (0..CONFIG_DIM)
                    .map(|i| self.weight.row(i).iter().copied().collect())
                    .collect(),
            ),
        }
    }

    /// Required step sum at 1-based step `j`.
    pub fn step_sum(&self, j: usize) -> i64 {
        if j == 1 || j == self.horizon {
            0
        } else {
            2
        }
    }

    /// Terminal cost `(q_t - q)^T Q (q_t - q)`.
    pub fn terminal_cost(&self, q: &DVector<f64>) -> f64 {
        let e = &self.target - q;
        e.dot(&(&self.weight * &e))
    }

    /// QP template over `[q^(1); ...; q^(l)]`.
    fn template(&self) -> QpProblem {
        let l = self.horizon;
        let n = CONFIG_DIM * l;
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for j in 0..l {
            let w = if j + 1 == l {
                self.weight.clone()
            } else {
                DMatrix::identity(CONFIG_DIM, CONFIG_DIM) * REGULARIZATION
            };
            g.rows_mut(j * CONFIG_DIM, CONFIG_DIM)
                .copy_from(&(&w * &self.target * -2.0));
            h.view_mut((j * CONFIG_DIM, j * CONFIG_DIM), (CONFIG_DIM, CONFIG_DIM))
                .copy_from(&(w * 2.0));
        }
        QpProblem::new(h, g).expect("template Hessian is PSD by construction")
    }

    fn admissible(&self) -> Vec<Vec<i64>> {
        (0..self.horizon * LIMBS)
            .map(|k| vec![0, CONTACT_VALUE[k % LIMBS]])
            .collect()
    }
}

struct SequenceRule<'a> {
    problem: &'a ContactSequenceProblem,
}

impl CouplingRule for SequenceRule<'_> {
    fn partial_ok(&self, a: &[i64]) -> bool {
        a.chunks(LIMBS).enumerate().all(|(j, step)| {
            let want = self.problem.step_sum(j + 1);
            let sum: i64 = step.iter().sum();
            let room: i64 = CONTACT_VALUE[step.len()..].iter().sum();
            sum <= want && sum + room >= want
        })
    }

    fn equalities(&self, a: &[i64], n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let rows = a.len() * LIMB_DIM;
        let mut m = DMatrix::zeros(rows, n);
        let mut b = DVector::zeros(rows);
        for (k, &c) in a.iter().enumerate() {
            let (j, i) = (k / LIMBS, k % LIMBS);
            for d in 0..LIMB_DIM {
                let r = k * LIMB_DIM + d;
                let col = j * CONFIG_DIM + i * LIMB_DIM + d;
                m[(r, col)] = 1.0;
                if c != 0 {
                    b[r] = self.problem.target[i * LIMB_DIM + d];
                } else if j == 0 {
                    b[r] = self.problem.initial[i * LIMB_DIM + d];
                } else {
                    m[(r, col - CONFIG_DIM)] = -1.0;
                }
            }
        }
        (m, b)
    }

    fn wants_bound(&self, depth: usize) -> bool {
        depth.is_multiple_of(LIMBS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPlan {
    /// `pattern[j][i]` is `c_i` at step `j + 1`.
    pub pattern: Vec<Vec<i64>>,
    /// Stitch knots: the initial configuration, `q^(1..l)`, then the target.
    pub knots: Vec<Vec<f64>>,
    /// Terminal cost of `q^(l)`.
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanMethod {
    BranchAndBound,
    Enumeration,
}

#[derive(Clone, Copy, Debug)]
pub struct PlannerSettings {
    pub method: PlanMethod,
    pub qp: QpSettings,
    pub execution: Execution,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            method: PlanMethod::BranchAndBound,
            qp: QpSettings {
                tol: 1e-9,
                ..QpSettings::default()
            },
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlanReport {
    pub plan: ContactPlan,
    pub nodes: usize,
    pub qp_solves: usize,
}

/// Solves the contact-sequence MIQP.
pub fn plan_contacts(p: &ContactSequenceProblem, settings: &PlannerSettings) -> Result<PlanReport> {
    p.validate()?;
    let rule = SequenceRule { problem: p };
    let miqp = MiqpProblem {
        template: p.template(),
        admissible: p.admissible(),
        rule: &rule,
    };
    let ms = MiqpSettings {
        qp: settings.qp,
        execution: settings.execution,
    };
    let r: MiqpResult = match settings.method {
        PlanMethod::BranchAndBound => solve_miqp(&miqp, &ms),
        PlanMethod::Enumeration => enumerate_miqp(&miqp, &ms),
    };
    assert_eq!(
        r.status,
        MiqpStatus::Optimal,
        "a horizon of at least 3 always admits a pattern"
    );
    let sol = r.solution.expect("optimal result carries a solution");
    let pattern: Vec<Vec<i64>> = r.assignment.chunks(LIMBS).map(|s| s.to_vec()).collect();
    let mut knots = Vec::with_capacity(p.horizon + 2);
    knots.push(p.initial.as_slice().to_vec());
    for j in 0..p.horizon {
        let mut q = sol.x.rows(j * CONFIG_DIM, CONFIG_DIM).into_owned();
        // pinned and held coordinates are exact by definition
        for (i, &c) in pattern[j].iter().enumerate() {
            for d in 0..LIMB_DIM {
                let k = i * LIMB_DIM + d;
                q[k] = if c != 0 { p.target[k] } else { knots[j][k] };
            }
        }
        knots.push(q.as_slice().to_vec());
    }
    knots.push(p.target.as_slice().to_vec());
    let last = DVector::from_column_slice(&knots[p.horizon]);
    let plan = ContactPlan {
        objective: p.terminal_cost(&last),
        pattern,
        knots,
    };
    Ok(PlanReport {
        plan,
        nodes: r.nodes,
        qp_solves: r.qp_solves,
    })
}

impl ContactPlan {
    pub fn horizon(&self) -> usize {
        self.pattern.len()
    }

    pub fn knot(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.knots[k])
    }

    /// `q^(j)` for 1-based step `j`.
    pub fn configuration(&self, j: usize) -> DVector<f64> {
        self.knot(j)
    }

    /// Checks every step-sum, admissibility and pin constraint.
    pub fn verify(&self, p: &ContactSequenceProblem) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.pattern.len() != p.horizon || self.knots.len() != p.horizon + 2 {
            return bad("plan length does not match the horizon".into());
        }
        for (j, step) in self.pattern.iter().enumerate() {
            if step.len() != LIMBS {
                return bad(format!("step {} has {} entries", j + 1, step.len()));
            }
            for (i, &c) in step.iter().enumerate() {
                if c != 0 && c != CONTACT_VALUE[i] {
                    return bad(format!("step {} limb {} has inadmissible value {c}", j + 1, i));
                }
            }
            let sum: i64 = step.iter().sum();
            if sum != p.step_sum(j + 1) {
                return bad(format!("step {} sums to {sum}", j + 1));
            }
            let q = self.configuration(j + 1);
            for (i, &c) in step.iter().enumerate() {
                let rows = i * LIMB_DIM..(i + 1) * LIMB_DIM;
                let reference = if c != 0 { &p.target } else { &self.knots_vec()[j] };
                for k in rows {
                    if (q[k] - reference[k]).abs() > PIN_TOL {
                        return bad(format!("step {} limb {} off its pinned value", j + 1, i));
                    }
                }
            }
        }
        Ok(())
    }

    fn knots_vec(&self) -> Vec<DVector<f64>> {
        self.knots.iter().map(|k| DVector::from_column_slice(k)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Piecewise-cubic joint trajectory through the plan knots, at rest at each
/// knot. Segment `j` joins knot `j` to knot `j + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StitchedTrajectory {
    pub knots: Vec<DVector<f64>>,
    pub step_duration: f64,
}

/// Builds the stitched trajectory. Limbs flagged at step `j` must not move
/// during segment `j`.
pub fn stitch_trajectories(plan: &ContactPlan, step_duration: f64) -> Result<StitchedTrajectory> {
    if !(step_duration > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step duration must be positive (got {step_duration})"
        )));
    }
    if plan.knots.len() != plan.pattern.len() + 2 || plan.knots.iter().any(|k| k.len() != CONFIG_DIM) {
        return Err(Error::Stitch("plan knots do not match its pattern".into()));
    }
    let knots = plan.knots_vec();
    for (j, step) in plan.pattern.iter().enumerate() {
        let seg = j + 1;
        for (i, &c) in step.iter().enumerate() {
            if c == 0 {
                continue;
            }
            #[allow(clippy::needless_range_loop)]
            for k in i * LIMB_DIM..(i + 1) * LIMB_DIM {
                if knots[seg][k] != knots[seg + 1][k] {
                    return Err(Error::Stitch(format!(
                        "limb {} is pinned at step {seg} but moves from {} to {}",
                        Limb::ALL[i].name(),
                        knots[seg][k],
                        knots[seg + 1][k]
                    )));
                }
            }
        }
    }
    Ok(StitchedTrajectory { knots, step_duration })
}

impl StitchedTrajectory {
    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.segments() as f64 * self.step_duration
    }

    /// Segment index and normalized time for `t`, clamped to the ends.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, self.duration());
        let seg = ((t / self.step_duration).floor() as usize).min(self.segments() - 1);
        (seg, (t - seg as f64 * self.step_duration) / self.step_duration)
    }

    pub fn sample(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let (seg, s) = self.locate(t);
        let (a, b) = (&self.knots[seg], &self.knots[seg + 1]);
        let blend = 3.0 * s * s - 2.0 * s * s * s;
        let rate = (6.0 * s - 6.0 * s * s) / self.step_duration;
        (a + (b - a) * blend, (b - a) * rate)
    }

    /// Limbs whose contact point is fixed over segment `seg`.
    pub fn stance(&self, seg: usize) -> Vec<Limb> {
        let (a, b) = (&self.knots[seg], &self.knots[seg + 1]);
        Limb::ALL
            .into_iter()
            .filter(|l| {
                let r = l.index() * LIMB_DIM..(l.index() + 1) * LIMB_DIM;
                r.into_iter().all(|k| a[k] == b[k])
            })
            .collect()
    }

    /// Samples at `dt` for playback.
    pub fn to_joint_trajectory(&self, dt: f64) -> Result<JointTrajectory> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
        }
        let n = (self.duration() / dt).round() as usize;
        let knots = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                let (q, qd) = self.sample(t);
                TrajectoryKnot {
                    t,
                    q: q.as_slice().to_vec(),
                    qd: qd.as_slice().to_vec(),
                }
            })
            .collect();
        JointTrajectory::new(knots)
    }
}

/// Convex hull (counter-clockwise) by the monotone chain.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// True iff `p` is inside the convex polygon `hull` (counter-clockwise) with
/// at least `shrink` clearance to every edge.
pub fn inside_shrunk_polygon(hull: &[Vector2<f64>], p: &Vector2<f64>, shrink: f64) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|k| {
        let a = hull[k];
        let b = hull[(k + 1) % hull.len()];
        let edge = b - a;
        let len = edge.norm();
        len > 0.0 && edge.perp(&(p - a)) / len >= shrink
    })
}

/// Checks that the projected CoM stays inside each segment's shrunk support
/// polygon at `samples` points per segment, endpoints included.
pub fn com_guard(traj: &StitchedTrajectory, model: &PlanarComposite, shrink: f64, samples: usize) -> bool {
    let samples = samples.max(2);
    (0..traj.segments()).all(|seg| {
        let stance = traj.stance(seg);
        if stance.len() < 3 {
            return false;
        }
        let contacts: Vec<Vector2<f64>> = stance
            .iter()
            .map(|l| PlanarComposite::contact_point(&traj.knots[seg], *l))
            .collect();
        let hull = convex_hull(&contacts);
        (0..samples).all(|k| {
            let t = (seg as f64 + k as f64 / (samples - 1) as f64) * traj.step_duration;
            let (q, _) = traj.sample(t);
            inside_shrunk_polygon(&hull, &model.com(&q), shrink)
        })
    })
}

/// Nominal stance and transition-ready configurations used by the mission.
pub fn pre_motion_problem(horizon: usize) -> Result<ContactSequenceProblem> {
    let initial = DVector::from_vec(vec![0.30, 0.0, 0.18, 0.15, 0.18, -0.15, -0.18, 0.15, -0.18, -0.15]);
    let target = DVector::from_vec(vec![0.45, 0.0, 0.24, 0.15, 0.24, -0.15, -0.24, 0.15, -0.24, -0.15]);
    ContactSequenceProblem::new(horizon, initial, target)
}

/// Reverse of [`pre_motion_problem`]: back from the transition-ready stance.
pub fn post_motion_problem(horizon: usize) -> Result<ContactSequenceProblem> {
    let pre = pre_motion_problem(horizon)?;
    ContactSequenceProblem::new(horizon, pre.target, pre.initial)
}
