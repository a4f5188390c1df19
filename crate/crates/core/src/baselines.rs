//! Comparison estimators of the observation probabilities.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::real::{cast, Real};
use crate::theta::{Provenance, ThetaEstimate};
use crate::EPS_PROB;
use ndarray::Axis;

/// Rank-1 probability estimate from marginal observation rates:
/// `θ_ij = (row mean i) · (column mean j)`, clamped away from {0,1}.
pub fn nw_estimator<T: Real>(w: &DenseMatrix<T>) -> Result<ThetaEstimate<T>> {
    if !w.is_binary() {
        return Err(Error::invalid("mask matrix must be 0/1-valued"));
    }
    let row_means = w.array().mean_axis(Axis(1)).expect("nonempty matrix");
    let col_means = w.array().mean_axis(Axis(0)).expect("nonempty matrix");
    let lo: T = cast(EPS_PROB);
    let hi = T::one() - lo;
    let theta = DenseMatrix::from_shape_fn(w.n_rows(), w.n_cols(), |(i, j)| {
        (row_means[i] * col_means[j]).min(hi).max(lo)
    });
    Ok(ThetaEstimate {
        theta,
        provenance: Provenance::Nw,
        beta: None,
        decomposition: None,
    })
}

/// Constant probability estimate: every entry equals the overall observed
/// fraction, clamped away from {0,1}.
pub fn uniform_estimator<T: Real>(w: &DenseMatrix<T>) -> Result<ThetaEstimate<T>> {
    if !w.is_binary() {
        return Err(Error::invalid("mask matrix must be 0/1-valued"));
    }
    let lo: T = cast(EPS_PROB);
    let hi = T::one() - lo;
    let rate = w.mean().min(hi).max(lo);
    Ok(ThetaEstimate {
        theta: DenseMatrix::constant(w.n_rows(), w.n_cols(), rate),
        provenance: Provenance::Uniform,
        beta: None,
        decomposition: None,
    })
}
