//! Reduced-order CBF safety filter for planar base velocity commands.
//!
//! The base is modeled as a single integrator `phi_dot = nu` with box input
//! bounds. Two barriers are enforced: `h1` keeps the base outside a padded
//! ellipse around the manway, `h2` keeps it inside the disk of radius
//! `r_p - epsilon` around the tray center. The filter solves
//!
//! ```text
//! minimize    || k_d - nu ||^2
//! subject to  grad h_i(phi)^T nu >= -gamma_i h_i(phi) + m_i
//!             nu_min <= nu <= nu_max
//! ```
//!
//! where `m_i` is a discretization margin that makes the constraint hold
//! for the forward-Euler step actually taken (zero for convex barriers).

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{wrap_angle, EllipseParams, TrayWorld, VelocityCommand};
use crate::qp::{QpProblem, QpSettings, QpSolver};

/// `phi_dot = f(phi) + g(phi) nu` with `f = 0`, `g = I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedModel {
    pub nu_min: Vector2<f64>,
    pub nu_max: Vector2<f64>,
}

impl ReducedModel {
    pub fn new(nu_min: Vector2<f64>, nu_max: Vector2<f64>) -> Result<Self> {
        if (0..2).any(|i| !(nu_min[i] < nu_max[i])) {
            return Err(Error::InvalidParameter(format!(
                "velocity bounds must satisfy min < max (got {nu_min:?}, {nu_max:?})"
            )));
        }
        Ok(Self { nu_min, nu_max })
    }

    pub fn symmetric(bound: f64) -> Result<Self> {
        Self::new(Vector2::repeat(-bound), Vector2::repeat(bound))
    }

    pub fn drift(&self, _phi: &Vector2<f64>) -> Vector2<f64> {
        Vector2::zeros()
    }

    pub fn input_map(&self, _phi: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::identity()
    }

    pub fn clamp(&self, nu: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            nu.x.clamp(self.nu_min.x, self.nu_max.x),
            nu.y.clamp(self.nu_min.y, self.nu_max.y),
        )
    }

    /// Largest `||nu||^2` over the input box.
    fn max_speed_sq(&self) -> f64 {
        (0..2).map(|i| self.nu_min[i].powi(2).max(self.nu_max[i].powi(2))).sum()
    }
}

impl Default for ReducedModel {
    fn default() -> Self {
        Self::symmetric(0.3).expect("default bounds are valid")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BarrierKind {
    ManwayEllipse(EllipseParams),
    TrayDisk { center: Vector2<f64>, radius: f64 },
}

/// Barrier with linear class-K function `alpha(h) = gamma h`.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierSpec {
    pub kind: BarrierKind,
    pub gamma: f64,
}

impl BarrierSpec {
    pub fn manway(world: &TrayWorld, layer: usize, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            kind: BarrierKind::ManwayEllipse(world.ellipse(layer).clone()),
            gamma,
        })
    }

    pub fn tray(world: &TrayWorld, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            kind: BarrierKind::TrayDisk {
                center: world.tray_center(),
                radius: world.safe_radius(),
            },
            gamma,
        })
    }

    /// The `[h1, h2]` pair for a layer.
    pub fn pair(world: &TrayWorld, layer: usize, gamma1: f64, gamma2: f64) -> Result<Vec<Self>> {
        Ok(vec![Self::manway(world, layer, gamma1)?, Self::tray(world, gamma2)?])
    }

    pub fn value(&self, phi: &Vector2<f64>) -> f64 {
        match &self.kind {
            BarrierKind::ManwayEllipse(e) => e.eval(phi),
            BarrierKind::TrayDisk { center, radius } => radius * radius - (phi - center).norm_squared(),
        }
    }

    pub fn gradient(&self, phi: &Vector2<f64>) -> Vector2<f64> {
        match &self.kind {
            BarrierKind::ManwayEllipse(e) => e.gradient(phi),
            BarrierKind::TrayDisk { center, .. } => -2.0 * (phi - center),
        }
    }

    /// `max(0, -lambda_min(hess h / 2))`: how much a straight step of length
    /// `s` can undershoot the linearization, per `s^2`.
    pub fn concavity(&self) -> f64 {
        match &self.kind {
            BarrierKind::ManwayEllipse(e) => {
                let lmin = e.a.symmetric_eigenvalues().min();
                (-lmin).max(0.0)
            }
            BarrierKind::TrayDisk { .. } => 1.0,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "class-K gain must be positive (got {gamma})"
        )))
    }
}

pub fn h1(world: &TrayWorld, layer: usize, phi: &Vector2<f64>) -> f64 {
    world.ellipse(layer).eval(phi)
}

pub fn h2(world: &TrayWorld, phi: &Vector2<f64>) -> f64 {
    let r = world.safe_radius();
    r * r - (phi - world.tray_center()).norm_squared()
}

/// Proportional reference `k_d = K (xi - phi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceController {
    pub goal: Vector2<f64>,
    pub gains: Vector2<f64>,
}

impl ReferenceController {
    pub fn new(goal: Vector2<f64>, gains: Vector2<f64>) -> Result<Self> {
        if gains.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidParameter("reference gains must be positive".into()));
        }
        Ok(Self { goal, gains })
    }

    pub fn command(&self, phi: &Vector2<f64>) -> Vector2<f64> {
        (self.goal - phi).component_mul(&self.gains)
    }
}

/// Saturated proportional heading controller.
pub fn heading_rate(yaw: f64, target: f64, gain: f64, max_rate: f64) -> f64 {
    (gain * wrap_angle(target - yaw)).clamp(-max_rate, max_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterStatus {
    Optimal,
    FilterInfeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterDiagnostics {
    pub h: Vec<f64>,
    /// Whether each barrier constraint is tight at the returned command.
    pub active: Vec<bool>,
    pub reference: [f64; 2],
    pub status: FilterStatus,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSettings {
    /// Integration step the command will be applied over; sizes the margin
    /// for concave barriers. Zero gives the continuous-time constraint.
    pub dt: f64,
    pub qp: QpSettings,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            dt: 0.01,
            qp: QpSettings {
                tol: 1e-9,
                ..QpSettings::default()
            },
        }
    }
}

/// Filter with its own solver workspace.
#[derive(Clone, Debug)]
pub struct SafetyFilter {
    pub model: ReducedModel,
    pub barriers: Vec<BarrierSpec>,
    pub settings: FilterSettings,
    solver: QpSolver,
}

impl SafetyFilter {
    pub fn new(model: ReducedModel, barriers: Vec<BarrierSpec>, settings: FilterSettings) -> Self {
        let mut solver = QpSolver::new(settings.qp);
        solver.warm_start = true;
        Self {
            model,
            barriers,
            settings,
            solver,
        }
    }

    pub fn filter(
        &mut self,
        reference: &ReferenceController,
        phi: &Vector2<f64>,
    ) -> (VelocityCommand, FilterDiagnostics) {
        self.filter_nominal(&reference.command(phi), phi)
    }

    pub fn filter_nominal(&mut self, k_d: &Vector2<f64>, phi: &Vector2<f64>) -> (VelocityCommand, FilterDiagnostics) {
        let nb = self.barriers.len();
        let h: Vec<f64> = self.barriers.iter().map(|b| b.value(phi)).collect();
        let speed_sq = self.model.max_speed_sq();
        let mut a = DMatrix::zeros(nb + 2, 2);
        let mut lo = DVector::zeros(nb + 2);
        let mut hi = DVector::from_element(nb + 2, f64::INFINITY);
        for (i, b) in self.barriers.iter().enumerate() {
            let g = b.gradient(phi);
            a[(i, 0)] = g.x;
            a[(i, 1)] = g.y;
            lo[i] = -b.gamma * h[i] + self.settings.dt * b.concavity() * speed_sq;
        }
        for j in 0..2 {
            a[(nb + j, j)] = 1.0;
            lo[nb + j] = self.model.nu_min[j];
            hi[nb + j] = self.model.nu_max[j];
        }
        let problem = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![-2.0 * k_d.x, -2.0 * k_d.y]),
        )
        .and_then(|p| p.with_inequalities(a.clone(), lo.clone(), hi))
        .expect("filter QP is well formed");
        let sol = self.solver.solve(&problem);
        let reference = [k_d.x, k_d.y];
        if !sol.is_optimal() {
            return (
                VelocityCommand::default(),
                FilterDiagnostics {
                    h,
                    active: vec![false; nb],
                    reference,
                    status: FilterStatus::FilterInfeasible,
                    iterations: sol.iterations,
                },
            );
        }
        let nu = Vector2::new(sol.x[0], sol.x[1]);
        let active = (0..nb)
            .map(|i| {
                let row = a[(i, 0)] * nu.x + a[(i, 1)] * nu.y;
                row - lo[i] <= 1e-7 * (1.0 + lo[i].abs())
            })
            .collect();
        (
            VelocityCommand {
                linear: nu,
                yaw_rate: 0.0,
            },
            FilterDiagnostics {
                h,
                active,
                reference,
                status: FilterStatus::Optimal,
                iterations: sol.iterations,
            },
        )
    }
}

/// One-shot filter call with a fresh workspace.
pub fn filter(
    model: &ReducedModel,
    barriers: &[BarrierSpec],
    reference: &ReferenceController,
    phi: &Vector2<f64>,
) -> (VelocityCommand, FilterDiagnostics) {
    let mut f = SafetyFilter::new(*model, barriers.to_vec(), FilterSettings::default());
    f.filter(reference, phi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutCase {
    pub start: Vector2<f64>,
    pub goal: Vector2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RolloutStats {
    pub min_h1: f64,
    pub min_h2: f64,
    pub final_position: [f64; 2],
    pub steps: usize,
    pub infeasible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutParams {
    pub layer: usize,
    pub model: ReducedModel,
    pub gains: Vector2<f64>,
    pub gamma: (f64, f64),
    pub dt: f64,
    pub max_steps: usize,
    /// Stop early once within this distance of the goal.
    pub goal_tol: f64,
}

impl Default for RolloutParams {
    fn default() -> Self {
        Self {
            layer: 0,
            model: ReducedModel::default(),
            gains: Vector2::new(1.0, 1.0),
            gamma: (1.0, 1.0),
            dt: 0.01,
            max_steps: 1000,
            goal_tol: 1e-3,
        }
    }
}

/// Closed-loop Euler simulation of the filtered reference controller.
pub fn rollout(world: &TrayWorld, case: &RolloutCase, params: &RolloutParams) -> Result<RolloutStats> {
    let barriers = BarrierSpec::pair(world, params.layer, params.gamma.0, params.gamma.1)?;
    let settings = FilterSettings {
        dt: params.dt,
        ..FilterSettings::default()
    };
    let mut f = SafetyFilter::new(params.model, barriers, settings);
    let reference = ReferenceController::new(case.goal, params.gains)?;
    let mut phi = case.start;
    let mut min_h1 = h1(world, params.layer, &phi);
    let mut min_h2 = h2(world, &phi);
    let mut steps = 0;
    let mut infeasible = false;
    while steps < params.max_steps && (phi - case.goal).norm() > params.goal_tol {
        let (cmd, diag) = f.filter(&reference, &phi);
        if diag.status != FilterStatus::Optimal {
            infeasible = true;
            break;
        }
        phi += cmd.linear * params.dt;
        steps += 1;
        min_h1 = min_h1.min(h1(world, params.layer, &phi));
        min_h2 = min_h2.min(h2(world, &phi));
    }
    Ok(RolloutStats {
        min_h1,
        min_h2,
        final_position: [phi.x, phi.y],
        steps,
        infeasible,
    })
}

pub fn rollout_batch(
    world: &TrayWorld,
    cases: &[RolloutCase],
    params: &RolloutParams,
    exec: Execution,
) -> Vec<Result<RolloutStats>> {
    exec.map(cases, |c| rollout(world, c, params))
}
