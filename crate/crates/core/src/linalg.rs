//! Dense SVD and the proximal/projection primitives used by every solver.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::real::Real;
use ndarray::{s, Array2};
use ndarray_linalg::{JobSvd, SVDDC};

/// Thin singular value decomposition `M = U · diag(s) · Vᵀ`.
///
/// `u` is `n1 × k`, `v` is `n2 × k` with `k = min(n1, n2)`; singular
/// values are nonincreasing and nonnegative. Reconstruction is accurate
/// to `1e-10 · max(1, ‖M‖_F)` relative and the factors are orthonormal
/// to the same tolerance.
#[derive(Debug, Clone)]
pub struct SvdResult<T> {
    pub u: DenseMatrix<T>,
    pub singular_values: Vec<T>,
    pub v: DenseMatrix<T>,
}

impl<T: Real> SvdResult<T> {
    /// Multiply the factors back together.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let k = self.singular_values.len();
        let mut us = self.u.array().clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).mapv_inplace(|x| x * s);
        }
        let vt = self.v.array().t().to_owned();
        DenseMatrix::from_array_unchecked(us.slice(s![.., ..k]).dot(&vt))
    }
}

pub(crate) fn svd_arr<T: Real>(m: &Array2<T>) -> Result<(Array2<T>, Vec<T>, Array2<T>)> {
    let (u, s, vt) = m
        .svddc(JobSvd::Some)
        .map_err(|e| Error::SvdFailed { msg: e.to_string() })?;
    let u = u.expect("JobSvd::Some returns U");
    let vt = vt.expect("JobSvd::Some returns Vᵀ");
    Ok((u, s.to_vec(), vt))
}

/// Singular values only (cheaper than a full decomposition).
pub(crate) fn singular_values_arr<T: Real>(m: &Array2<T>) -> Result<Vec<T>> {
    let (_, s, _) = m
        .svddc(JobSvd::None)
        .map_err(|e| Error::SvdFailed { msg: e.to_string() })?;
    Ok(s.to_vec())
}

/// Thin SVD of a dense matrix.
pub fn svd<T: Real>(m: &DenseMatrix<T>) -> Result<SvdResult<T>> {
    let (u, s, vt) = svd_arr(m.array())?;
    Ok(SvdResult {
        u: DenseMatrix::from_array_unchecked(u),
        singular_values: s,
        v: DenseMatrix::from_array_unchecked(vt.t().to_owned()),
    })
}

/// Singular value soft-thresholding plus the shrunk spectrum.
///
/// Returns `(X, σ')` where `X = U · diag(σ') · Vᵀ`, `σ'_i = max(σ_i − t, 0)`.
/// Only the strictly positive part of the spectrum participates in the
/// reconstruction, so the cost scales with the post-shrinkage rank.
pub(crate) fn svt_arr<T: Real>(m: &Array2<T>, t: T) -> Result<(Array2<T>, Vec<T>)> {
    let k_min = m.nrows().min(m.ncols());
    if t == T::zero() {
        let s = singular_values_arr(m)?;
        return Ok((m.clone(), s));
    }
    let (u, s, vt) = svd_arr(m)?;
    let shrunk: Vec<T> = s.iter().map(|&x| (x - t).max(T::zero())).collect();
    let r = shrunk.iter().take_while(|&&x| x > T::zero()).count();
    if r == 0 {
        return Ok((Array2::zeros(m.raw_dim()), vec![T::zero(); k_min]));
    }
    let mut ur = u.slice(s![.., ..r]).to_owned();
    for (j, &sv) in shrunk.iter().take(r).enumerate() {
        ur.column_mut(j).mapv_inplace(|x| x * sv);
    }
    let x = ur.dot(&vt.slice(s![..r, ..]));
    Ok((x, shrunk))
}

/// Proximal operator of `t‖·‖_*`: soft-threshold the singular values.
///
/// The output is the unique minimizer of `½‖X − M‖_F² + t‖X‖_*`.
pub fn svt<T: Real>(m: &DenseMatrix<T>, t: T) -> Result<DenseMatrix<T>> {
    if t < T::zero() {
        return Err(Error::invalid("svt threshold must be nonnegative"));
    }
    if t == T::zero() {
        return Ok(m.clone());
    }
    let (x, _) = svt_arr(m.array(), t)?;
    Ok(DenseMatrix::from_array_unchecked(x))
}

pub(crate) fn clip_arr<T: Real>(m: &Array2<T>, lo: T, hi: T) -> Array2<T> {
    m.mapv(|v| v.min(hi).max(lo))
}

/// Entrywise clamp to `[lo, hi]` — the Euclidean projection onto the
/// max-norm box.
pub fn clip_entries<T: Real>(m: &DenseMatrix<T>, lo: T, hi: T) -> Result<DenseMatrix<T>> {
    if lo > hi {
        return Err(Error::invalid(format!("clip bounds inverted: {lo} > {hi}")));
    }
    Ok(DenseMatrix::from_array_unchecked(clip_arr(m.array(), lo, hi)))
}

pub(crate) fn center_arr<T: Real>(z: &Array2<T>) -> Array2<T> {
    let mean = z.mean().unwrap_or_else(T::zero);
    z.mapv(|v| v - mean)
}

/// Subtract the grand mean — the Euclidean projection onto the affine set
/// `{Z : 1ᵀZ1 = 0}` that identifies the scalar offset in the predictor
/// decomposition.
pub fn mean_center<T: Real>(z: &DenseMatrix<T>) -> DenseMatrix<T> {
    DenseMatrix::from_array_unchecked(center_arr(z.array()))
}

/// The norms reported by [`norms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport<T> {
    pub frobenius: T,
    pub nuclear: T,
    pub spectral: T,
    pub max_abs: T,
}

/// Frobenius, nuclear and spectral norms plus the largest absolute entry.
pub fn norms<T: Real>(m: &DenseMatrix<T>) -> Result<NormReport<T>> {
    let s = singular_values_arr(m.array())?;
    Ok(NormReport {
        frobenius: m.frobenius(),
        nuclear: s.iter().fold(T::zero(), |a, &b| a + b),
        spectral: s.first().copied().unwrap_or_else(T::zero),
        max_abs: m.max_abs(),
    })
}

/// Count of singular values above `rel_tol · σ₁` (0 for the zero matrix).
pub(crate) fn rank_from_singular_values<T: Real>(s: &[T], rel_tol: T) -> usize {
    match s.first() {
        None => 0,
        Some(&s1) if s1 <= T::zero() => 0,
        Some(&s1) => s.iter().filter(|&&v| v > rel_tol * s1).count(),
    }
}
