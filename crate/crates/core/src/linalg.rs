//! Fixed-size 3×3 linear algebra for covariance handling.
//!
//! Only what the mixture model needs: products, a cyclic Jacobi eigensolver
//! for symmetric matrices and a Cholesky factorization.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::scalar::Real;

pub type Vec3<T> = [T; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Default for Mat3<T> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Real> Mat3<T> {
    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn zeros() -> Self {
        Self {
            m: [[T::zero(); 3]; 3],
        }
    }

    pub fn identity() -> Self {
        Self::diagonal([T::one(); 3])
    }

    pub fn diagonal(d: Vec3<T>) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            out.m[i][i] = d[i];
        }
        out
    }

    /// `a bᵀ`
    pub fn outer(a: Vec3<T>, b: Vec3<T>) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = a[i] * b[j];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v = *v * s;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let mut out = [T::zero(); 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.m[i][0] * v[0] + self.m[i][1] * v[1] + self.m[i][2] * v[2];
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.m
            .iter()
            .flatten()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (*self - self.transpose()).max_abs() <= tol
    }

    /// Averages the matrix with its transpose.
    pub fn symmetrized(&self) -> Self {
        (*self + self.transpose()).scale(T::lit(0.5))
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and the matrix whose columns are
    /// the matching unit eigenvectors.
    pub fn symmetric_eigen(&self) -> (Vec3<T>, Mat3<T>) {
        let mut a = self.symmetrized();
        let mut v = Mat3::identity();
        let eps = T::epsilon();
        for _sweep in 0..64 {
            let off = (a.m[0][1] * a.m[0][1] + a.m[0][2] * a.m[0][2] + a.m[1][2] * a.m[1][2]).sqrt();
            let scale = a.max_abs();
            if off <= eps * scale || off == T::zero() {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let apq = a.m[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.m[q][q] - a.m[p][p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // A' = Jᵀ A J with the Givens rotation J in the (p, q) plane.
                for k in 0..3 {
                    let akp = a.m[k][p];
                    let akq = a.m[k][q];
                    a.m[k][p] = c * akp - s * akq;
                    a.m[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a.m[p][k];
                    let aqk = a.m[q][k];
                    a.m[p][k] = c * apk - s * aqk;
                    a.m[q][k] = s * apk + c * aqk;
                }
                for k in 0..3 {
                    let vkp = v.m[k][p];
                    let vkq = v.m[k][q];
                    v.m[k][p] = c * vkp - s * vkq;
                    v.m[k][q] = s * vkp + c * vkq;
                }
            }
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| a.m[i][i].partial_cmp(&a.m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
        let values = [a.m[order[0]][order[0]], a.m[order[1]][order[1]], a.m[order[2]][order[2]]];
        let mut vectors = Mat3::zeros();
        for (col, &src) in order.iter().enumerate() {
            for row in 0..3 {
                vectors.m[row][col] = v.m[row][src];
            }
        }
        (values, vectors)
    }

    /// Raises every eigenvalue below `floor` to `floor`. Matrices already
    /// satisfying the floor are returned unchanged (symmetrized).
    pub fn floor_eigenvalues(&self, floor: T) -> Self {
        let sym = self.symmetrized();
        let (values, vectors) = sym.symmetric_eigen();
        if values[0] >= floor {
            return sym;
        }
        let clamped = [values[0].max(floor), values[1].max(floor), values[2].max(floor)];
        (vectors * Mat3::diagonal(clamped) * vectors.transpose()).symmetrized()
    }

    /// Lower-triangular `L` with `L Lᵀ = self`, or `None` when not positive-definite.
    pub fn cholesky(&self) -> Option<Mat3<T>> {
        let mut l = Mat3::zeros();
        for i in 0..3 {
            for j in 0..=i {
                let mut sum = self.m[i][j];
                for k in 0..j {
                    sum = sum - l.m[i][k] * l.m[j][k];
                }
                if i == j {
                    if !(sum > T::zero()) {
                        return None;
                    }
                    l.m[i][i] = sum.sqrt();
                } else {
                    l.m[i][j] = sum / l.m[j][j];
                }
            }
        }
        Some(l)
    }
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute<T: Real>(l: &Mat3<T>, b: Vec3<T>) -> Vec3<T> {
    let mut y = [T::zero(); 3];
    for i in 0..3 {
        let mut s = b[i];
        for k in 0..i {
            s = s - l.m[i][k] * y[k];
        }
        y[i] = s / l.m[i][i];
    }
    y
}

pub fn sub3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn dist2<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    let d = sub3(a, b);
    dot3(d, d)
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = out.m[i][j] + rhs.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = out.m[i][j] - rhs.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = T::zero();
                for k in 0..3 {
                    s = s + self.m[i][k] * rhs.m[k][j];
                }
                out.m[i][j] = s;
            }
        }
        out
    }
}

impl<T> Index<(usize, usize)> for Mat3<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.m[i][j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat3<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.m[i][j]
    }
}
