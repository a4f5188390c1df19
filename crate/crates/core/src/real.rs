//! Scalar abstraction shared by every numeric module.

use ndarray::ScalarOperand;
use num_traits::{Float, NumAssignOps};

/// Floating-point scalar usable throughout the crate: ordinary IEEE
/// arithmetic plus a LAPACK binding for the dense SVD. Implemented by
/// `f32` and `f64`.
pub trait Real:
    Float
    + NumAssignOps
    + ScalarOperand
    + ndarray_linalg::Lapack
    + ndarray_linalg::Scalar<Real = Self>
    + std::fmt::Display
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + NumAssignOps
        + ScalarOperand
        + ndarray_linalg::Lapack
        + ndarray_linalg::Scalar<Real = T>
        + std::fmt::Display
        + std::fmt::Debug
        + Send
        + Sync
        + 'static
{
}

/// Lift an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn cast<T: Real>(x: f64) -> T {
    T::from(x).expect("constant not representable in scalar type")
}

/// Lower a scalar to `f64` (exact for f32/f64).
#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}
