//! Symmetric matrix roots via eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this (relative to the largest) are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Largest accepted condition number for inversion.
pub const MAX_CONDITION: f64 = 1e12;

fn eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

fn rebuild(e: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Symmetric positive semidefinite square root. Negative eigenvalues from
/// rounding are clipped to zero.
pub fn sqrt_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].max(0.0).sqrt());
    }
    rebuild(&eigen(a), |l| l.max(0.0).sqrt())
}

/// Inverse symmetric square root `a^{-1/2}`.
///
/// Fails when `a` has a non-positive eigenvalue or condition number above
/// [`MAX_CONDITION`]; nothing is regularized.
pub fn inv_sqrt_pd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 1 {
        let v = a[(0, 0)];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Numerical(format!("scalar {v} is not positive")));
        }
        return Ok(DMatrix::from_element(1, 1, 1.0 / v.sqrt()));
    }
    let e = eigen(a);
    let max = e.eigenvalues.max();
    let min = e.eigenvalues.min();
    if !(max > 0.0) || !(min > EIGEN_FLOOR * max) || max / min > MAX_CONDITION {
        return Err(Error::Numerical(format!(
            "matrix is singular or ill-conditioned (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    Ok(rebuild(&e, |l| 1.0 / l.sqrt()))
}
