use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive-definite matrix.
pub(crate) struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    pub ridged: bool,
}

impl SpdFactor {
    /// Fails with [`Error::Curvature`] on a non-positive pivot.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Curvature);
        }
        let chol = m.clone().cholesky().ok_or(Error::Curvature)?;
        if chol.l_dirty().diagonal().iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Curvature);
        }
        Ok(Self { chol, ridged: false })
    }

    /// As [`new`](Self::new), retrying with `λ·max(1, |diag|)` added to the
    /// diagonal for `λ = 1e-8, 1e-6, …, 1e6`. Meant for search directions away
    /// from the optimum, where the information need not be positive definite.
    pub fn damped(m: &DMatrix<f64>) -> Result<Self> {
        let mut err = match Self::new(m) {
            Ok(f) => return Ok(f),
            Err(e) => e,
        };
        let mut lambda = 1e-8;
        while lambda <= 1e6 {
            match Self::ridged(m, lambda) {
                Ok(f) => return Ok(f),
                Err(e) => err = e,
            }
            lambda *= 100.0;
        }
        Err(err)
    }

    fn ridged(m: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += lambda * r[(i, i)].abs().max(1.0);
        }
        let mut f = Self::new(&r)?;
        f.ridged = true;
        Ok(f)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

pub(crate) fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
