//! Inverse-dynamics QP, reference generation and joint-level torque laws.

use nalgebra::{DMatrix, DVector};

use super::model::{ContactLayout, DynamicsModel};
use crate::error::{Error, Result};
use crate::qp::{QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerWeights {
    pub w_qdd: DMatrix<f64>,
    pub w_tau: DMatrix<f64>,
    /// Weight over the full stacked contact force vector.
    pub w_c: DMatrix<f64>,
    pub kp: DVector<f64>,
    pub kd: DVector<f64>,
    /// Symmetric torque bounds `|tau_i| <= limit_i`.
    pub torque_limit: DVector<f64>,
    pub mu: f64,
}

impl ControllerWeights {
    pub fn defaults(model: &dyn DynamicsModel) -> Self {
        let (n, na, nc) = (model.dof(), model.actuated(), model.contact_dim());
        Self {
            w_qdd: DMatrix::identity(n, n),
            w_tau: DMatrix::identity(na, na) * 1e-3,
            w_c: DMatrix::identity(nc, nc) * 1e-4,
            kp: DVector::from_element(n, 100.0),
            kd: DVector::from_element(n, 20.0),
            torque_limit: DVector::from_element(na, 100.0),
            mu: 0.4,
        }
    }

    pub fn validate(&self, model: &dyn DynamicsModel) -> Result<()> {
        let (n, na, nc) = (model.dof(), model.actuated(), model.contact_dim());
        let shapes = [
            (self.w_qdd.shape(), (n, n), "w_qdd"),
            (self.w_tau.shape(), (na, na), "w_tau"),
            (self.w_c.shape(), (nc, nc), "w_c"),
        ];
        for (got, want, name) in shapes {
            if got != want {
                return Err(Error::InvalidParameter(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if self.kp.len() != n || self.kd.len() != n || self.torque_limit.len() != na {
            return Err(Error::InvalidParameter(
                "gain or limit vector has the wrong length".into(),
            ));
        }
        if self.kp.iter().chain(self.kd.iter()).any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidParameter("PD gains must be positive".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "friction coefficient must be positive (got {})",
                self.mu
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbcStatus {
    Optimal,
    ControllerInfeasible,
    NotConverged,
}

#[derive(Clone, Debug)]
pub struct FbcSolution {
    pub qdd: DVector<f64>,
    pub tau: DVector<f64>,
    /// Forces of the active contacts, stacked in contact order.
    pub force: DVector<f64>,
    pub status: FbcStatus,
    pub eom_residual: f64,
    pub contact_residual: f64,
    pub qp: QpSolution,
}

/// Linearized friction cone rows `G F <= 0` for one contact.
pub fn friction_rows(layout: ContactLayout, mu: f64) -> DMatrix<f64> {
    match layout {
        ContactLayout::Planar => DMatrix::from_row_slice(3, 2, &[1.0, -mu, -1.0, -mu, 0.0, -1.0]),
        ContactLayout::Spatial => DMatrix::from_row_slice(
            5,
            3,
            &[
                1.0, 0.0, -mu, -1.0, 0.0, -mu, 0.0, 1.0, -mu, 0.0, -1.0, -mu, 0.0, 0.0, -1.0,
            ],
        ),
    }
}

/// Desired acceleration `Kp (q_d - q) + Kd (qd_d - qd)`.
pub fn desired_acceleration(
    weights: &ControllerWeights,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    q_des: &DVector<f64>,
    qd_des: &DVector<f64>,
) -> DVector<f64> {
    (q_des - q).component_mul(&weights.kp) + (qd_des - qd).component_mul(&weights.kd)
}

/// Inverse-dynamics QP over `x = [qdd; tau; F]`.
#[allow(clippy::too_many_arguments)]
pub fn solve_fbc(
    model: &dyn DynamicsModel,
    weights: &ControllerWeights,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    q_des: &DVector<f64>,
    qd_des: &DVector<f64>,
    contacts: &[bool],
    solver: &mut QpSolver,
) -> Result<FbcSolution> {
    weights.validate(model)?;
    if contacts.len() != model.contact_count() || !contacts.iter().any(|c| *c) {
        return Err(Error::InvalidParameter(
            "contact set must be non-empty and match the model".into(),
        ));
    }
    let (n, na) = (model.dof(), model.actuated());
    let cs = model.contact_layout().size();
    let rows: Vec<usize> = contacts
        .iter()
        .enumerate()
        .filter(|(_, on)| **on)
        .flat_map(|(i, _)| (i * cs)..((i + 1) * cs))
        .collect();
    let nf = rows.len();
    let nx = n + na + nf;

    let d = model.mass_matrix(q);
    let h = model.bias(q, qd);
    let s = model.selection();
    let jc_full = model.contact_jacobian(q);
    let jc = jc_full.select_rows(rows.iter());
    let jdqd = model.contact_bias(q, qd).select_rows(rows.iter());
    let wc = weights.w_c.select_rows(rows.iter()).select_columns(rows.iter());
    let qdd_des = desired_acceleration(weights, q, qd, q_des, qd_des);

    let mut hess = DMatrix::zeros(nx, nx);
    hess.view_mut((0, 0), (n, n)).copy_from(&(&weights.w_qdd * 2.0));
    hess.view_mut((n, n), (na, na)).copy_from(&(&weights.w_tau * 2.0));
    hess.view_mut((n + na, n + na), (nf, nf)).copy_from(&(wc * 2.0));
    let mut lin = DVector::zeros(nx);
    lin.rows_mut(0, n).copy_from(&(&weights.w_qdd * &qdd_des * -2.0));

    let mut aeq = DMatrix::zeros(n + nf, nx);
    aeq.view_mut((0, 0), (n, n)).copy_from(&d);
    aeq.view_mut((0, n), (n, na)).copy_from(&(-s.transpose()));
    aeq.view_mut((0, n + na), (n, nf)).copy_from(&(-jc.transpose()));
    aeq.view_mut((n, 0), (nf, n)).copy_from(&jc);
    let mut beq = DVector::zeros(n + nf);
    beq.rows_mut(0, n).copy_from(&(-&h));
    beq.rows_mut(n, nf).copy_from(&(-&jdqd));

    let cone = friction_rows(model.contact_layout(), weights.mu);
    let n_active = nf / cs;
    let mc = cone.nrows() * n_active;
    let mut ain = DMatrix::zeros(mc + na, nx);
    let mut lo = DVector::zeros(mc + na);
    let mut hi = DVector::zeros(mc + na);
    for c in 0..n_active {
        ain.view_mut((c * cone.nrows(), n + na + c * cs), cone.shape())
            .copy_from(&cone);
    }
    lo.rows_mut(0, mc).fill(f64::NEG_INFINITY);
    for i in 0..na {
        ain[(mc + i, n + i)] = 1.0;
        lo[mc + i] = -weights.torque_limit[i];
        hi[mc + i] = weights.torque_limit[i];
    }

    let problem = QpProblem::new(hess, lin)?
        .with_equalities(aeq, beq)?
        .with_inequalities(ain, lo, hi)?;
    let sol = solver.solve(&problem);
    let qdd = sol.x.rows(0, n).into_owned();
    let tau = sol.x.rows(n, na).into_owned();
    let force = sol.x.rows(n + na, nf).into_owned();
    let eom_residual = (&d * &qdd + &h - s.transpose() * &tau - jc.transpose() * &force).amax();
    let contact_residual = (&jc * &qdd + &jdqd).amax();
    let status = match sol.status {
        QpStatus::Optimal => FbcStatus::Optimal,
        QpStatus::PrimalInfeasible => FbcStatus::ControllerInfeasible,
        QpStatus::MaxIterations => FbcStatus::NotConverged,
    };
    Ok(FbcSolution {
        qdd,
        tau,
        force,
        status,
        eom_residual,
        contact_residual,
        qp: sol,
    })
}

/// QP settings used by the body controller.
pub fn fbc_qp_settings() -> QpSettings {
    QpSettings {
        tol: 1e-9,
        max_iter: 4000,
        ..QpSettings::default()
    }
}

/// Semi-implicit Euler: velocity first, then position with the new velocity.
pub fn integrate_reference(
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
    }
    let qd_next = qd + qdd * dt;
    let q_next = q + &qd_next * dt;
    Ok((q_next, qd_next))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpedanceGains {
    pub kp: DVector<f64>,
    pub kd: DVector<f64>,
}

impl ImpedanceGains {
    pub fn new(kp: DVector<f64>, kd: DVector<f64>) -> Result<Self> {
        if kp.len() != kd.len() || kp.iter().chain(kd.iter()).any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidParameter(
                "impedance gains must be positive and equally sized".into(),
            ));
        }
        Ok(Self { kp, kd })
    }

    pub fn uniform(n: usize, kp: f64, kd: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, kp), DVector::from_element(n, kd))
    }
}

/// Joint impedance law, saturated at `limit`. The flag reports saturation.
pub fn impedance_torque(
    tau_ff: &DVector<f64>,
    q_next: &DVector<f64>,
    qd_next: &DVector<f64>,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    gains: &ImpedanceGains,
    limit: &DVector<f64>,
) -> (DVector<f64>, bool) {
    let raw = tau_ff + (q_next - q).component_mul(&gains.kp) + (qd_next - qd).component_mul(&gains.kd);
    clamp_torque(raw, limit)
}

fn clamp_torque(raw: DVector<f64>, limit: &DVector<f64>) -> (DVector<f64>, bool) {
    let mut clamped = false;
    let out = DVector::from_fn(raw.len(), |i, _| {
        let v = raw[i].clamp(-limit[i], limit[i]);
        clamped |= v != raw[i];
        v
    });
    (out, clamped)
}

/// Gravity compensation plus joint PD, used during transitions and
/// intermediate motions. Joint errors are taken on the actuated coordinates.
pub fn transition_torque(
    model: &dyn DynamicsModel,
    q_des: &DVector<f64>,
    qd_des: &DVector<f64>,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    gains: &ImpedanceGains,
) -> DVector<f64> {
    let s = model.selection();
    model.gravity_torque(q)
        + (&s * (q_des - q)).component_mul(&gains.kp)
        + (&s * (qd_des - qd)).component_mul(&gains.kd)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkTarget {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

const IK_MAX_ITER: usize = 100;
const IK_TOL: f64 = 1e-6;
const IK_DAMPING: f64 = 1e-4;

/// Damped least squares on the actuated joints, with the unactuated (base)
/// coordinates of `q_init` held fixed. `qd_base` is the base velocity used
/// when mapping the target velocity to joint rates.
pub fn ik_references(
    model: &dyn DynamicsModel,
    q_init: &DVector<f64>,
    qd_base: &DVector<f64>,
    target: &IkTarget,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let k = model.unactuated();
    let na = model.actuated();
    let mut q = q_init.clone();
    let mut err = f64::INFINITY;
    let mut converged = false;
    for _ in 0..IK_MAX_ITER {
        let e = &target.position - model.task_position(&q);
        err = e.norm();
        if err < IK_TOL {
            converged = true;
            break;
        }
        let ja = model.task_jacobian(&q).columns(k, na).into_owned();
        let m = &ja * ja.transpose() + DMatrix::identity(ja.nrows(), ja.nrows()) * IK_DAMPING.powi(2);
        let Some(step) = m.lu().solve(&e) else { break };
        let dq = ja.transpose() * step;
        for i in 0..na {
            q[k + i] += dq[i];
        }
    }
    if !converged {
        let e = (&target.position - model.task_position(&q)).norm();
        if e < IK_TOL {
            err = e;
        } else {
            return Err(Error::IkFailure {
                iterations: IK_MAX_ITER,
                error: err,
            });
        }
    }
    let _ = err;
    let j = model.task_jacobian(&q);
    let ja = j.columns(k, na).into_owned();
    let ju = j.columns(0, k).into_owned();
    let v = &target.velocity - ju * qd_base;
    let m = &ja * ja.transpose() + DMatrix::identity(ja.nrows(), ja.nrows()) * 1e-12;
    let rates = ja.transpose() * m.lu().solve(&v).unwrap_or_else(|| DVector::zeros(v.len()));
    let mut qd = DVector::zeros(model.dof());
    qd.rows_mut(0, k).copy_from(qd_base);
    qd.rows_mut(k, na).copy_from(&rates);
    Ok((q, qd))
}
