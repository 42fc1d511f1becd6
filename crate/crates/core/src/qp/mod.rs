//! Dense convex QP kernel.
//!
//! Problems have the form
//!
//! ```text
//! minimize    1/2 x^T Q x + q^T x
//! subject to  A_eq x = b_eq
//!             lower <= A_in x <= upper
//! ```
//!
//! and are solved with an operator-splitting (ADMM) iteration followed by a
//! polishing step that re-solves the KKT system on the detected active set.
//! Bounds may be infinite. The [`miqp`] submodule adds a branch-and-bound
//! driver for problems parameterized by a small set of integer variables.

mod ldl;
pub mod miqp;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ldl::Ldl;
pub use miqp::{enumerate_miqp, solve_miqp, CouplingRule, MiqpProblem, MiqpResult, MiqpSettings, MiqpStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    eq_matrix: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    ineq_matrix: DMatrix<f64>,
    ineq_lower: DVector<f64>,
    ineq_upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem. The Hessian is symmetrized and checked for
    /// positive semidefiniteness.
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = linear.len();
        if hessian.nrows() != n || hessian.ncols() != n {
            return Err(Error::InvalidProblem(format!(
                "hessian is {}x{} but the linear term has {n} entries",
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        if hessian.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite objective data".into()));
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        let min_eig = min_eigenvalue_estimate(&hessian);
        let scale = hessian.amax().max(1.0);
        if min_eig < -1e-8 * scale {
            return Err(Error::InvalidProblem(format!(
                "hessian is not positive semidefinite (smallest eigenvalue ~ {min_eig:.3e})"
            )));
        }
        Ok(Self {
            hessian,
            linear,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_lower: DVector::zeros(0),
            ineq_upper: DVector::zeros(0),
        })
    }

    /// Appends equality rows `a x = b`.
    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        self.check_rows(&a, b.len(), "equality")?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("equality right-hand side must be finite".into()));
        }
        self.eq_matrix = stack(&self.eq_matrix, &a);
        self.eq_rhs = stack_vec(&self.eq_rhs, &b);
        Ok(self)
    }

    /// Appends inequality rows `lower <= a x <= upper`; bounds may be infinite.
    pub fn with_inequalities(mut self, a: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        self.check_rows(&a, lower.len(), "inequality")?;
        if upper.len() != lower.len() {
            return Err(Error::InvalidProblem("bound vectors differ in length".into()));
        }
        for (l, u) in lower.iter().zip(upper.iter()) {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::InvalidProblem(format!("invalid bounds [{l}, {u}]")));
            }
        }
        self.ineq_matrix = stack(&self.ineq_matrix, &a);
        self.ineq_lower = stack_vec(&self.ineq_lower, &lower);
        self.ineq_upper = stack_vec(&self.ineq_upper, &upper);
        Ok(self)
    }

    fn check_rows(&self, a: &DMatrix<f64>, m: usize, what: &str) -> Result<()> {
        if a.ncols() != self.dim() || a.nrows() != m {
            return Err(Error::InvalidProblem(format!(
                "{what} matrix is {}x{}, expected {m}x{}",
                a.nrows(),
                a.ncols(),
                self.dim()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem(format!("non-finite {what} matrix")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }
    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }
    pub fn equalities(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.eq_matrix, &self.eq_rhs)
    }
    pub fn inequalities(&self) -> (&DMatrix<f64>, &DVector<f64>, &DVector<f64>) {
        (&self.ineq_matrix, &self.ineq_lower, &self.ineq_upper)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    /// Largest violation of any constraint at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.eq_matrix * x - &self.eq_rhs).amax();
        let ax = &self.ineq_matrix * x;
        let ineq = (0..ax.len())
            .map(|i| (self.ineq_lower[i] - ax[i]).max(ax[i] - self.ineq_upper[i]).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq)
    }

    /// Stationarity and complementarity residuals for a primal/dual pair.
    pub fn kkt_residuals(&self, sol: &QpSolution) -> KktResiduals {
        let x = &sol.x;
        let stationarity = (&self.hessian * x
            + &self.linear
            + self.eq_matrix.transpose() * &sol.eq_duals
            + self.ineq_matrix.transpose() * &sol.ineq_duals)
            .amax();
        let ax = &self.ineq_matrix * x;
        let mut comp: f64 = 0.0;
        for i in 0..ax.len() {
            let mu = sol.ineq_duals[i];
            let slack = if mu > 0.0 {
                ax[i] - self.ineq_upper[i]
            } else {
                self.ineq_lower[i] - ax[i]
            };
            if mu != 0.0 {
                comp = comp.max((mu * slack).abs());
            }
        }
        KktResiduals {
            stationarity,
            complementarity: comp,
            primal: self.max_violation(x),
        }
    }

    fn stacked(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let a = stack(&self.eq_matrix, &self.ineq_matrix);
        let l = stack_vec(&self.eq_rhs, &self.ineq_lower);
        let u = stack_vec(&self.eq_rhs, &self.ineq_upper);
        (a, l, u)
    }

    pub fn to_json(&self) -> QpProblemJson {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        let bound = |v: &DVector<f64>| v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        QpProblemJson {
            hessian: rows(&self.hessian),
            linear: self.linear.iter().copied().collect(),
            eq: (self.eq_matrix.nrows() > 0).then(|| EqJson {
                matrix: rows(&self.eq_matrix),
                rhs: self.eq_rhs.iter().copied().collect(),
            }),
            ineq: (self.ineq_matrix.nrows() > 0).then(|| IneqJson {
                matrix: rows(&self.ineq_matrix),
                lower: bound(&self.ineq_lower),
                upper: bound(&self.ineq_upper),
            }),
        }
    }

    /// Writes the problem as JSON for offline inspection.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols().max(b.ncols());
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), n);
    if a.nrows() > 0 {
        out.rows_mut(0, a.nrows()).copy_from(a);
    }
    if b.nrows() > 0 {
        out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    }
    out
}

fn stack_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Estimate of the smallest eigenvalue of a symmetric matrix: 50 power
/// iterations on `s I - Q`, where `s` is a Gershgorin bound on the spectrum.
/// The estimate never undershoots the true value by more than roundoff, so
/// PSD matrices are never rejected.
pub fn min_eigenvalue_estimate(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    if n == 0 {
        return 0.0;
    }
    let s = (0..n)
        .map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if s == 0.0 {
        return 0.0;
    }
    let shifted = DMatrix::identity(n, n) * s - q;
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.37 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut mu = 0.0;
    for _ in 0..50 {
        let w = &shifted * &v;
        mu = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
    }
    s - mu
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    PrimalInfeasible,
    MaxIterations,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub complementarity: f64,
    pub primal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers for the equality rows (`Qx + q + A_eq^T eq + A_in^T ineq = 0`).
    pub eq_duals: DVector<f64>,
    /// Multipliers for the inequality rows: positive at an active upper bound,
    /// negative at an active lower bound.
    pub ineq_duals: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub adapt_interval: usize,
    pub infeasibility_tol: f64,
    pub polish: bool,
    pub polish_refine_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            tol: 1e-6,
            max_iter: 4000,
            adapt_interval: 25,
            infeasibility_tol: 1e-5,
            polish: true,
            polish_refine_iters: 8,
        }
    }
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const POLISH_DELTA: f64 = 1e-9;

/// Solver with reusable workspace. One instance per thread.
#[derive(Clone, Debug, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
    warm: Option<(DVector<f64>, DVector<f64>, DVector<f64>)>,
    pub warm_start: bool,
}

/// Convenience wrapper around [`QpSolver`] with default settings.
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> QpSolution {
    let mut solver = QpSolver::new(QpSettings {
        tol,
        max_iter,
        ..QpSettings::default()
    });
    solver.solve(p)
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    prim_scale: f64,
    dual_scale: f64,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self {
            settings,
            warm: None,
            warm_start: false,
        }
    }

    pub fn solve(&mut self, p: &QpProblem) -> QpSolution {
        let s = self.settings;
        let n = p.dim();
        let (a, l, u) = p.stacked();
        let m = a.nrows();
        let at = a.transpose();
        let pm = &p.hessian;
        let q = &p.linear;

        let warm = match (&self.warm, self.warm_start) {
            (Some((wx, wz, wy)), true) if wx.len() == n && wz.len() == m => Some((wx.clone(), wz.clone(), wy.clone())),
            _ => None,
        };
        let warm_given = warm.is_some();
        let (mut x, mut z, mut y) = warm.unwrap_or_else(|| (DVector::zeros(n), DVector::zeros(m), DVector::zeros(m)));

        // the previous active set is often still right: try it before iterating
        if warm_given && s.polish {
            if let Some(sol) = self.try_polish(p, &a, &at, &l, &u, &z, &y, 0) {
                return sol;
            }
        }

        let mut rho = s.rho;
        let mut rho_vec = rho_vector(&l, &u, rho);
        let mut kkt = match factor_reduced(pm, &a, &rho_vec, s.sigma) {
            Some(f) => f,
            None => return self.failed(p, n, m),
        };

        let mut status = QpStatus::MaxIterations;
        let mut iterations = s.max_iter;
        let mut last = Residuals {
            prim: f64::INFINITY,
            dual: f64::INFINITY,
            eps_prim: 0.0,
            eps_dual: 0.0,
            prim_scale: 0.0,
            dual_scale: 0.0,
        };

        for k in 1..=s.max_iter {
            let x_prev = x.clone();
            let z_prev = z.clone();
            let y_prev = y.clone();

            let mut rhs = &x_prev * s.sigma - q + &at * (rho_vec.component_mul(&z_prev) - &y_prev);
            kkt.solve_in_place(&mut rhs);
            let x_tilde = rhs;
            let z_tilde = &a * &x_tilde;
            x = &x_tilde * s.alpha + &x_prev * (1.0 - s.alpha);
            let z_relax = &z_tilde * s.alpha + &z_prev * (1.0 - s.alpha);
            for i in 0..m {
                z[i] = (z_relax[i] + y_prev[i] / rho_vec[i]).clamp(l[i], u[i]);
                y[i] = y_prev[i] + rho_vec[i] * (z_relax[i] - z[i]);
            }

            last = residuals(pm, q, &a, &at, &x, &z, &y, s.tol);
            if last.prim <= last.eps_prim && last.dual <= last.eps_dual {
                status = QpStatus::Optimal;
                iterations = k;
                break;
            }
            if m > 0 && primal_infeasible(&at, &l, &u, &(&y - &y_prev), s.infeasibility_tol) {
                status = QpStatus::PrimalInfeasible;
                iterations = k;
                break;
            }
            if s.adapt_interval > 0 && k % s.adapt_interval == 0 && m > 0 {
                let ratio =
                    ((last.prim / (last.prim_scale + 1e-30)) / (last.dual / (last.dual_scale + 1e-30) + 1e-30)).sqrt();
                let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                    rho = new_rho;
                    rho_vec = rho_vector(&l, &u, rho);
                    match factor_reduced(pm, &a, &rho_vec, s.sigma) {
                        Some(f) => kkt = f,
                        None => return self.failed(p, n, m),
                    }
                }
            }
        }

        if s.polish && status != QpStatus::PrimalInfeasible {
            if let Some(sol) = self.try_polish(p, &a, &at, &l, &u, &z, &y, iterations) {
                return sol;
            }
        }

        if status == QpStatus::Optimal {
            self.warm = Some((x.clone(), z.clone(), y.clone()));
        }
        let me = p.eq_rhs.len();
        QpSolution {
            objective: p.objective(&x),
            eq_duals: y.rows(0, me).into_owned(),
            ineq_duals: y.rows(me, m - me).into_owned(),
            x,
            status,
            iterations,
            primal_residual: last.prim,
            dual_residual: last.dual,
            polished: false,
        }
    }

    /// Polishes on the active set guessed from `(z, y)`; returns a solution
    /// only when the polished point passes the optimality checks.
    #[allow(clippy::too_many_arguments)]
    fn try_polish(
        &mut self,
        p: &QpProblem,
        a: &DMatrix<f64>,
        at: &DMatrix<f64>,
        l: &DVector<f64>,
        u: &DVector<f64>,
        z: &DVector<f64>,
        y: &DVector<f64>,
        iterations: usize,
    ) -> Option<QpSolution> {
        let s = self.settings;
        let (px, py) = polish(&p.hessian, &p.linear, a, l, u, z, y, s)?;
        let pz = clamp_vec(&(a * &px), l, u);
        let r = residuals(&p.hessian, &p.linear, a, at, &px, &pz, &py, s.tol);
        if r.prim > r.eps_prim || r.dual > r.eps_dual {
            return None;
        }
        let me = p.eq_rhs.len();
        let m = a.nrows();
        let sol = QpSolution {
            objective: p.objective(&px),
            eq_duals: py.rows(0, me).into_owned(),
            ineq_duals: py.rows(me, m - me).into_owned(),
            x: px.clone(),
            status: QpStatus::Optimal,
            iterations,
            primal_residual: r.prim,
            dual_residual: r.dual,
            polished: true,
        };
        self.warm = Some((px, pz, py));
        Some(sol)
    }

    fn failed(&self, p: &QpProblem, n: usize, m: usize) -> QpSolution {
        let me = p.eq_rhs.len();
        let x = DVector::zeros(n);
        QpSolution {
            objective: p.objective(&x),
            x,
            eq_duals: DVector::zeros(me),
            ineq_duals: DVector::zeros(m - me),
            status: QpStatus::MaxIterations,
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            polished: false,
        }
    }
}

fn rho_vector(l: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
    DVector::from_fn(l.len(), |i, _| {
        if l[i] == u[i] {
            (rho * RHO_EQ_SCALE).min(RHO_MAX)
        } else if l[i].is_infinite() && u[i].is_infinite() {
            RHO_MIN
        } else {
            rho
        }
    })
}

fn factor_reduced(p: &DMatrix<f64>, a: &DMatrix<f64>, rho: &DVector<f64>, sigma: f64) -> Option<Ldl> {
    let n = p.nrows();
    let mut k = p + DMatrix::identity(n, n) * sigma;
    if a.nrows() > 0 {
        let mut ra = a.clone();
        for (i, mut row) in ra.row_iter_mut().enumerate() {
            row *= rho[i];
        }
        k += a.transpose() * ra;
    }
    Ldl::factor(&k)
}

fn clamp_vec(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].clamp(l[i], u[i]))
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    at: &DMatrix<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
) -> Residuals {
    let ax = a * x;
    let px = p * x;
    let aty = at * y;
    let prim = if ax.is_empty() { 0.0 } else { (&ax - z).amax() };
    let dual = (&px + q + &aty).amax();
    let prim_scale = if ax.is_empty() { 0.0 } else { ax.amax().max(z.amax()) };
    let dual_scale = px.amax().max(aty.amax()).max(q.amax());
    Residuals {
        prim,
        dual,
        eps_prim: tol + tol * prim_scale,
        eps_dual: tol + tol * dual_scale,
        prim_scale,
        dual_scale,
    }
}

fn primal_infeasible(at: &DMatrix<f64>, l: &DVector<f64>, u: &DVector<f64>, dy: &DVector<f64>, eps: f64) -> bool {
    let norm = dy.amax();
    if norm < 1e-10 {
        return false;
    }
    if (at * dy).amax() > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let d = dy[i];
        if d > 0.0 {
            if u[i].is_infinite() {
                if d > eps * norm {
                    return false;
                }
            } else {
                support += u[i] * d;
            }
        } else if d < 0.0 {
            if l[i].is_infinite() {
                if -d > eps * norm {
                    return false;
                }
            } else {
                support += l[i] * d;
            }
        }
    }
    support < -eps * norm
}

/// Re-solves the equality-constrained QP on the active set guessed from the
/// ADMM iterate. Returns the primal/dual pair, unchecked.
#[allow(clippy::too_many_arguments)]
fn polish(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    s: QpSettings,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.nrows();
    let m = a.nrows();
    // (row, bound) for every active constraint
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        if l[i] == u[i] || (l[i].is_finite() && z[i] - l[i] < -y[i]) {
            active.push((i, l[i]));
        } else if u[i].is_finite() && u[i] - z[i] < y[i] {
            active.push((i, u[i]));
        }
    }
    let na = active.len();
    let dim = n + na;
    let mut k0 = DMatrix::<f64>::zeros(dim, dim);
    k0.view_mut((0, 0), (n, n)).copy_from(p);
    for (r, &(i, _)) in active.iter().enumerate() {
        for j in 0..n {
            k0[(n + r, j)] = a[(i, j)];
            k0[(j, n + r)] = a[(i, j)];
        }
    }
    let mut kd = k0.clone();
    for j in 0..n {
        kd[(j, j)] += POLISH_DELTA;
    }
    for r in 0..na {
        kd[(n + r, n + r)] -= POLISH_DELTA;
    }
    let f = Ldl::factor(&kd)?;
    let mut rhs = DVector::<f64>::zeros(dim);
    for j in 0..n {
        rhs[j] = -q[j];
    }
    for (r, &(_, b)) in active.iter().enumerate() {
        rhs[n + r] = b;
    }
    let mut sol = f.solve(&rhs);
    for _ in 0..s.polish_refine_iters {
        let r = &rhs - &k0 * &sol;
        if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
            break;
        }
        sol += f.solve(&r);
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut yy = DVector::<f64>::zeros(m);
    for (r, &(i, b)) in active.iter().enumerate() {
        let mut v = sol[n + r];
        // reject multipliers pointing the wrong way for the bound they hold
        if l[i] != u[i] {
            let at_lower = b == l[i];
            if (at_lower && v > s.tol) || (!at_lower && v < -s.tol) {
                return None;
            }
            v = if at_lower { v.min(0.0) } else { v.max(0.0) };
        }
        yy[i] = v;
    }
    Some((x, yy))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EqJson {
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

/// Inequality block; `null` bounds stand for infinity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IneqJson {
    pub matrix: Vec<Vec<f64>>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

/// JSON form of a [`QpProblem`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpProblemJson {
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq: Option<EqJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ineq: Option<IneqJson>,
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidProblem(format!("{what} rows must have {ncols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl QpProblemJson {
    pub fn build(&self) -> Result<QpProblem> {
        let n = self.linear.len();
        let h = matrix_from_rows(&self.hessian, n, "hessian")?;
        let mut p = QpProblem::new(h, DVector::from_vec(self.linear.clone()))?;
        if let Some(eq) = &self.eq {
            p = p.with_equalities(
                matrix_from_rows(&eq.matrix, n, "eq.matrix")?,
                DVector::from_vec(eq.rhs.clone()),
            )?;
        }
        if let Some(ineq) = &self.ineq {
            p = p.with_inequalities(
                matrix_from_rows(&ineq.matrix, n, "ineq.matrix")?,
                DVector::from_iterator(
                    ineq.lower.len(),
                    ineq.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)),
                ),
                DVector::from_iterator(ineq.upper.len(), ineq.upper.iter().map(|v| v.unwrap_or(f64::INFINITY))),
            )?;
        }
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<QpProblem> {
        let text = std::fs::read_to_string(path)?;
        let json: QpProblemJson = serde_json::from_str(&text)?;
        json.build()
    }
}
