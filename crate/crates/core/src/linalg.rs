//! Dense least-squares helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a column space is treated as
/// rank deficient.
pub const RANK_RTOL: f64 = 1e-12;

/// Least squares `argmin ‖A X − B‖_F` for a full-column-rank `A`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() < a.ncols() {
        return Err(Error::Rank(format!(
            "{what}: {} rows cannot determine {} unknowns",
            a.nrows(),
            a.ncols()
        )));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * RANK_RTOL {
        return Err(Error::Rank(format!(
            "{what}: matrix is rank deficient (singular values {smax:.3e} .. {smin:.3e})"
        )));
    }
    svd.solve(b, 0.0)
        .map_err(|e| Error::Rank(format!("{what}: {e}")))
}

/// Minimum-norm least-squares solution; never fails. Directions with
/// singular values below `RANK_RTOL · σ_max` are dropped.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return DVector::zeros(a.ncols());
    }
    svd.solve(b, smax * RANK_RTOL)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}
