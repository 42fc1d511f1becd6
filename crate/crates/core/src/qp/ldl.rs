//! Dense LDL^T factorization without pivoting.
//!
//! Works for symmetric positive definite matrices and for the quasi-definite
//! KKT matrices `[P + dI, A^T; A, -dI]` used when polishing, both of which
//! admit the factorization for any symmetric permutation.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct Ldl {
    /// Unit lower-triangular factor, stored in the strict lower triangle.
    l: DMatrix<f64>,
    d: DVector<f64>,
}

impl Ldl {
    /// Factors the symmetric matrix `m` (only the lower triangle is read).
    /// Returns `None` when a pivot is zero or not finite.
    pub fn factor(m: &DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        debug_assert_eq!(n, m.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut d = DVector::<f64>::zeros(n);
        let mut work = vec![0.0; n];
        for j in 0..n {
            let mut dj = m[(j, j)];
            for k in 0..j {
                work[k] = l[(j, k)] * d[k];
                dj -= l[(j, k)] * work[k];
            }
            if dj == 0.0 || !dj.is_finite() {
                return None;
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * work[k];
                }
                l[(i, j)] = s / dj;
            }
        }
        Some(Self { l, d })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn diagonal(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s;
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_spd_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = Ldl::factor(&a).unwrap().solve(&b);
        assert_relative_eq!(&a * x, b, epsilon = 1e-12);
    }

    #[test]
    fn solves_quasi_definite_kkt() {
        // [P + dI, A^T; A, -dI]
        let kkt = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 2.0, 1.0, 1.0, 1.0, -1e-8]);
        let f = Ldl::factor(&kkt).unwrap();
        assert!(f.diagonal()[2] < 0.0);
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let x = f.solve(&b);
        assert_relative_eq!(x[0] + x[1], 1.0, epsilon = 1e-7);
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-7);
    }

    #[test]
    fn zero_pivot_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(Ldl::factor(&a).is_none());
    }
}
