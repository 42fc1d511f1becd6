//! Dynamics interface and the bundled planar test models.

use nalgebra::{DMatrix, DVector};

pub const GRAVITY: f64 = 9.81;

/// How contact forces are parameterized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactLayout {
    /// `[F_t, F_n]` per contact.
    Planar,
    /// `[F_x, F_y, F_n]` per contact.
    Spatial,
}

impl ContactLayout {
    pub fn size(self) -> usize {
        match self {
            ContactLayout::Planar => 2,
            ContactLayout::Spatial => 3,
        }
    }
}

/// Rigid-body model `D(q) qdd + H(q, qd) = S^T tau + J_c^T F_c`.
///
/// The first [`unactuated`](Self::unactuated) coordinates are the
/// unactuated (base) coordinates; `S` selects the remaining ones.
pub trait DynamicsModel: Sync {
    fn dof(&self) -> usize;
    fn unactuated(&self) -> usize;
    fn actuated(&self) -> usize {
        self.dof() - self.unactuated()
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Coriolis, centrifugal and gravity terms.
    fn bias(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64>;
    /// Generalized gravity `dV/dq`.
    fn gravity(&self, q: &DVector<f64>) -> DVector<f64>;
    fn potential_energy(&self, q: &DVector<f64>) -> f64;

    fn selection(&self) -> DMatrix<f64> {
        let (n, k) = (self.dof(), self.unactuated());
        DMatrix::from_fn(n - k, n, |i, j| if j == i + k { 1.0 } else { 0.0 })
    }

    /// Gravity torque on the actuated joints, `S g(q)`.
    fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64> {
        self.selection() * self.gravity(q)
    }

    fn contact_layout(&self) -> ContactLayout;
    fn contact_count(&self) -> usize;
    fn contact_dim(&self) -> usize {
        self.contact_count() * self.contact_layout().size()
    }
    /// Stacked contact Jacobian, `contact_dim x dof`.
    fn contact_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// `J_c_dot(q, qd) qd`.
    fn contact_bias(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64>;

    /// Task-space point driven by inverse kinematics (e.g. a foot).
    fn task_position(&self, q: &DVector<f64>) -> DVector<f64>;
    fn task_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;

    fn kinetic_energy(&self, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
        0.5 * qd.dot(&(self.mass_matrix(q) * qd))
    }
}

/// Link parameters for the planar two-link chains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkParams {
    pub length: f64,
    pub mass: f64,
    /// Distance from the proximal joint to the link CoM.
    pub com: f64,
    pub inertia: f64,
}

impl LinkParams {
    /// Uniform rod.
    pub fn rod(length: f64, mass: f64) -> Self {
        Self {
            length,
            mass,
            com: length / 2.0,
            inertia: mass * length * length / 12.0,
        }
    }
}

/// Fixed-base planar two-link arm; joint angles measured from the
/// horizontal, gravity along `-y`. The single contact is at the tip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLinkArm {
    pub link1: LinkParams,
    pub link2: LinkParams,
    pub gravity: f64,
}

impl Default for TwoLinkArm {
    fn default() -> Self {
        Self {
            link1: LinkParams::rod(0.2, 1.0),
            link2: LinkParams::rod(0.2, 1.0),
            gravity: GRAVITY,
        }
    }
}

impl TwoLinkArm {
    pub fn tip(&self, q: &DVector<f64>) -> (f64, f64) {
        let (l1, l2) = (self.link1.length, self.link2.length);
        (
            l1 * q[0].cos() + l2 * (q[0] + q[1]).cos(),
            l1 * q[0].sin() + l2 * (q[0] + q[1]).sin(),
        )
    }

    fn tip_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (l1, l2) = (self.link1.length, self.link2.length);
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        DMatrix::from_row_slice(2, 2, &[-l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12])
    }
}

impl DynamicsModel for TwoLinkArm {
    fn dof(&self) -> usize {
        2
    }
    fn unactuated(&self) -> usize {
        0
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = (self.link1, self.link2);
        let c2 = q[1].cos();
        let d11 = a.mass * a.com.powi(2)
            + b.mass * (a.length.powi(2) + b.com.powi(2) + 2.0 * a.length * b.com * c2)
            + a.inertia
            + b.inertia;
        let d12 = b.mass * (b.com.powi(2) + a.length * b.com * c2) + b.inertia;
        let d22 = b.mass * b.com.powi(2) + b.inertia;
        DMatrix::from_row_slice(2, 2, &[d11, d12, d12, d22])
    }

    fn bias(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        let h = self.link2.mass * self.link1.length * self.link2.com * q[1].sin();
        let coriolis = DVector::from_vec(vec![-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]]);
        coriolis + self.gravity(q)
    }

    fn gravity(&self, q: &DVector<f64>) -> DVector<f64> {
        let (a, b, g) = (self.link1, self.link2, self.gravity);
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        DVector::from_vec(vec![
            (a.mass * a.com + b.mass * a.length) * g * c1 + b.mass * b.com * g * c12,
            b.mass * b.com * g * c12,
        ])
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let (a, b, g) = (self.link1, self.link2, self.gravity);
        let y1 = a.com * q[0].sin();
        let y2 = a.length * q[0].sin() + b.com * (q[0] + q[1]).sin();
        g * (a.mass * y1 + b.mass * y2)
    }

    fn contact_layout(&self) -> ContactLayout {
        ContactLayout::Planar
    }
    fn contact_count(&self) -> usize {
        1
    }

    /// Tip contact with tangent along `x` and normal along `y`.
    fn contact_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.tip_jacobian(q)
    }

    fn contact_bias(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        let (l1, l2) = (self.link1.length, self.link2.length);
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        let w1 = qd[0] * qd[0];
        let w12 = (qd[0] + qd[1]).powi(2);
        DVector::from_vec(vec![-l1 * c1 * w1 - l2 * c12 * w12, -l1 * s1 * w1 - l2 * s12 * w12])
    }

    fn task_position(&self, q: &DVector<f64>) -> DVector<f64> {
        let (x, y) = self.tip(q);
        DVector::from_vec(vec![x, y])
    }

    fn task_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.tip_jacobian(q)
    }
}

/// Two-link leg hanging from a base that slides freely along the vertical
/// axis: `q = (z, q1, q2)`, the slider is unactuated, the foot is the single
/// planar contact. Standing therefore requires contact force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlidingLeg {
    pub base_mass: f64,
    pub thigh: LinkParams,
    pub shank: LinkParams,
    pub gravity: f64,
}

impl Default for SlidingLeg {
    fn default() -> Self {
        Self {
            base_mass: 5.0,
            thigh: LinkParams::rod(0.2, 1.0),
            shank: LinkParams::rod(0.2, 1.0),
            gravity: GRAVITY,
        }
    }
}

/// Translational Jacobians (rows x, z) of the thigh CoM, shank CoM and foot.
struct LegKinematics {
    j1: [[f64; 3]; 2],
    j2: [[f64; 3]; 2],
    jf: [[f64; 3]; 2],
}

impl SlidingLeg {
    fn kinematics(&self, q: &DVector<f64>) -> LegKinematics {
        let (s1, c1) = q[1].sin_cos();
        let (s12, c12) = (q[1] + q[2]).sin_cos();
        let (l1, lc1, lc2, l2) = (self.thigh.length, self.thigh.com, self.shank.com, self.shank.length);
        LegKinematics {
            j1: [[0.0, -lc1 * s1, 0.0], [1.0, lc1 * c1, 0.0]],
            j2: [
                [0.0, -l1 * s1 - lc2 * s12, -lc2 * s12],
                [1.0, l1 * c1 + lc2 * c12, lc2 * c12],
            ],
            jf: [
                [0.0, -l1 * s1 - l2 * s12, -l2 * s12],
                [1.0, l1 * c1 + l2 * c12, l2 * c12],
            ],
        }
    }

    /// Velocity-product accelerations `J_dot qd` of a point at distances
    /// `a` along the thigh and `b` along the shank.
    fn point_bias(&self, q: &DVector<f64>, qd: &DVector<f64>, a: f64, b: f64) -> [f64; 2] {
        let (s1, c1) = q[1].sin_cos();
        let (s12, c12) = (q[1] + q[2]).sin_cos();
        let w1 = qd[1] * qd[1];
        let w12 = (qd[1] + qd[2]).powi(2);
        [-a * c1 * w1 - b * c12 * w12, -a * s1 * w1 - b * s12 * w12]
    }

    pub fn foot(&self, q: &DVector<f64>) -> (f64, f64) {
        let (l1, l2) = (self.thigh.length, self.shank.length);
        (
            l1 * q[1].cos() + l2 * (q[1] + q[2]).cos(),
            q[0] + l1 * q[1].sin() + l2 * (q[1] + q[2]).sin(),
        )
    }
}

fn jt_times(j: &[[f64; 3]; 2], f: [f64; 2]) -> DVector<f64> {
    DVector::from_fn(3, |k, _| j[0][k] * f[0] + j[1][k] * f[1])
}

impl DynamicsModel for SlidingLeg {
    fn dof(&self) -> usize {
        3
    }
    fn unactuated(&self) -> usize {
        1
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let k = self.kinematics(q);
        let mut d = DMatrix::zeros(3, 3);
        d[(0, 0)] = self.base_mass;
        for (j, m) in [(&k.j1, self.thigh.mass), (&k.j2, self.shank.mass)] {
            for a in 0..3 {
                for b in 0..3 {
                    d[(a, b)] += m * (j[0][a] * j[0][b] + j[1][a] * j[1][b]);
                }
            }
        }
        // rotational inertia: thigh turns with q1, shank with q1 + q2
        let (i1, i2) = (self.thigh.inertia, self.shank.inertia);
        d[(1, 1)] += i1 + i2;
        d[(1, 2)] += i2;
        d[(2, 1)] += i2;
        d[(2, 2)] += i2;
        d
    }

    fn bias(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        let k = self.kinematics(q);
        let a1 = self.point_bias(q, qd, self.thigh.com, 0.0);
        let a2 = self.point_bias(q, qd, self.thigh.length, self.shank.com);
        jt_times(&k.j1, a1.map(|v| v * self.thigh.mass))
            + jt_times(&k.j2, a2.map(|v| v * self.shank.mass))
            + self.gravity(q)
    }

    fn gravity(&self, q: &DVector<f64>) -> DVector<f64> {
        let k = self.kinematics(q);
        let g = self.gravity;
        let mut out = jt_times(&k.j1, [0.0, self.thigh.mass * g]) + jt_times(&k.j2, [0.0, self.shank.mass * g]);
        out[0] += self.base_mass * g;
        out
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let z1 = q[0] + self.thigh.com * q[1].sin();
        let z2 = q[0] + self.thigh.length * q[1].sin() + self.shank.com * (q[1] + q[2]).sin();
        self.gravity * (self.base_mass * q[0] + self.thigh.mass * z1 + self.shank.mass * z2)
    }

    fn contact_layout(&self) -> ContactLayout {
        ContactLayout::Planar
    }
    fn contact_count(&self) -> usize {
        1
    }

    fn contact_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let jf = self.kinematics(q).jf;
        DMatrix::from_fn(2, 3, |r, c| jf[r][c])
    }

    fn contact_bias(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        let a = self.point_bias(q, qd, self.thigh.length, self.shank.length);
        DVector::from_vec(a.to_vec())
    }

    fn task_position(&self, q: &DVector<f64>) -> DVector<f64> {
        let (x, z) = self.foot(q);
        DVector::from_vec(vec![x, z])
    }

    fn task_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.contact_jacobian(q)
    }
}
