//! Symmetric tridiagonal storage and an LDLᵀ factorization.
//!
//! Linear elements on a 1D mesh couple only neighbouring nodes, so every
//! full-order operator in this crate is symmetric tridiagonal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    /// `off[i]` holds entry `(i, i + 1)`.
    off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn from_parts(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.len() != off.len() + 1 && !(diag.is_empty() && off.is_empty()) {
            return Err(Error::DimensionMismatch(format!(
                "tridiagonal with {} diagonal and {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diag(&self) -> &[f64] {
        &self.off
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i + 1 == j {
            self.off[i]
        } else if j + 1 == i {
            self.off[j]
        } else {
            0.0
        }
    }

    pub fn add_diag(&mut self, i: usize, value: f64) {
        self.diag[i] += value;
    }

    /// Adds `value` to both `(i, i+1)` and `(i+1, i)`.
    pub fn add_off(&mut self, i: usize, value: f64) {
        self.off[i] += value;
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|d| d * factor).collect(),
            off: self.off.iter().map(|o| o * factor).collect(),
        }
    }

    /// `self * a + other * b`
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot combine {}x{} with {}x{}",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            off: self
                .off
                .iter()
                .zip(&other.off)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    /// Row `i` applied to `x`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = self.diag[i] * x[i];
        if i > 0 {
            acc += self.off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            acc += self.off[i] * x[i + 1];
        }
        acc
    }

    /// Principal submatrix over a strictly increasing index list.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Self {
        let diag = indices.iter().map(|&i| self.diag[i]).collect();
        let off = indices
            .windows(2)
            .map(|w| self.get(w[0], w[1]))
            .collect();
        Self { diag, off }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.off)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn factor(&self) -> Result<TridiagonalLdl> {
        TridiagonalLdl::new(self)
    }
}

/// LDLᵀ factorization of a symmetric tridiagonal matrix (no pivoting).
#[derive(Clone, Debug)]
pub struct TridiagonalLdl {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagonalLdl {
    pub fn new(a: &SymTridiagonal) -> Result<Self> {
        let n = a.dim();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut di = a.diag[i];
            if i > 0 {
                di -= l[i - 1] * l[i - 1] * d[i - 1];
            }
            if !di.is_finite() || di.abs() <= 1e-14 * scale {
                return Err(Error::Singular(format!(
                    "zero pivot at row {i} of a {n}x{n} tridiagonal system"
                )));
            }
            d[i] = di;
            if i + 1 < n {
                l[i] = a.off[i] / di;
            }
        }
        Ok(Self { d, l })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        debug_assert_eq!(b.len(), n);
        for i in 1..n {
            b[i] -= self.l[i - 1] * b[i - 1];
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            b[i] -= self.l[i] * b[i + 1];
        }
    }

    /// True when every pivot is positive, i.e. the factored matrix is SPD.
    pub fn is_positive_definite(&self) -> bool {
        self.d.iter().all(|&d| d > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SymTridiagonal {
        SymTridiagonal::from_parts(vec![4.0, 5.0, 6.0, 7.0], vec![1.0, -2.0, 0.5]).unwrap()
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let x = [1.0, -1.0, 2.0, 0.25];
        let mut y = [0.0; 4];
        a.mul_vec(&x, &mut y);
        let dense = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        for i in 0..4 {
            assert!((y[i] - dense[i]).abs() < 1e-14);
            assert!((a.row_dot(i, &x) - dense[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn ldl_solves_system() {
        let a = sample();
        let f = a.factor().unwrap();
        assert!(f.is_positive_definite());
        let x = [0.3, -1.2, 2.0, 4.0];
        let mut b = [0.0; 4];
        a.mul_vec(&x, &mut b);
        f.solve_in_place(&mut b);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = SymTridiagonal::from_parts(vec![1.0, 1.0], vec![-1.0]).unwrap();
        assert!(matches!(a.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn principal_submatrix_drops_broken_couplings() {
        let a = sample();
        let sub = a.principal_submatrix(&[0, 2, 3]);
        assert_eq!(sub.diag(), &[4.0, 6.0, 7.0]);
        assert_eq!(sub.off_diag(), &[0.0, 0.5]);
    }
}
