#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tray_autonomy::qp::QpProblem;

/// Random strictly convex QP that is feasible by construction: bounds are
/// placed around a random interior point.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, m_eq: usize, m_in: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let q = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let mut p = QpProblem::new(h, q).unwrap();
    if m_eq > 0 {
        let a = DMatrix::from_fn(m_eq, n, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * &x0;
        p = p.with_equalities(a, b).unwrap();
    }
    if m_in > 0 {
        let a = DMatrix::from_fn(m_in, n, |_, _| rng.random_range(-1.0..1.0));
        let ax = &a * &x0;
        let mut lo = DVector::zeros(m_in);
        let mut hi = DVector::zeros(m_in);
        for i in 0..m_in {
            let w1 = rng.random_range(0.05..0.5);
            let w2 = rng.random_range(0.05..0.5);
            match rng.random_range(0..3) {
                0 => {
                    lo[i] = ax[i] - w1;
                    hi[i] = f64::INFINITY;
                }
                1 => {
                    lo[i] = f64::NEG_INFINITY;
                    hi[i] = ax[i] + w2;
                }
                _ => {
                    lo[i] = ax[i] - w1;
                    hi[i] = ax[i] + w2;
                }
            }
        }
        p = p.with_inequalities(a, lo, hi).unwrap();
    }
    p
}

/// Brute-force solution: try every assignment of each inequality row to
/// {inactive, at lower, at upper}, solve the equality-constrained KKT system
/// with a dense LU, keep primal-feasible points with correctly signed
/// multipliers, and return the cheapest.
pub fn active_set_oracle(p: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = p.dim();
    let (ae, be) = p.equalities();
    let (ai, lo, hi) = p.inequalities();
    let mi = ai.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let total = 3usize.pow(mi as u32);
    'outer: for code in 0..total {
        let mut state = vec![0u8; mi];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut rows: Vec<(DVector<f64>, f64, i8)> = Vec::new();
        for i in 0..ae.nrows() {
            rows.push((ae.row(i).transpose(), be[i], 0));
        }
        for i in 0..mi {
            match state[i] {
                0 => {}
                1 if lo[i].is_finite() => rows.push((ai.row(i).transpose(), lo[i], -1)),
                2 if hi[i].is_finite() => rows.push((ai.row(i).transpose(), hi[i], 1)),
                _ => continue 'outer,
            }
        }
        let k = rows.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(p.hessian());
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-p.linear()));
        for (r, (a, b, _)) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
            rhs[n + r] = *b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        if p.max_violation(&x) > 1e-9 {
            continue;
        }
        let signs_ok = rows.iter().enumerate().all(|(r, (_, _, side))| match side {
            -1 => sol[n + r] <= 1e-9,
            1 => sol[n + r] >= -1e-9,
            _ => true,
        });
        if !signs_ok {
            continue;
        }
        let obj = p.objective(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    }
    best
}
