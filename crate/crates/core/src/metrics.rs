//! Evaluation metrics for probability and completion estimates.

use crate::error::{Error, Result};
use crate::linalg::{rank_from_singular_values, singular_values_arr};
use crate::matrix::DenseMatrix;
use crate::real::{cast, to_f64, Real};
use ndarray::Zip;

/// Metric bundle reported per estimator; absent metrics stay `None`.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub rmse: Option<f64>,
    pub hellinger_sq: Option<f64>,
    pub test_error: Option<f64>,
    pub rmspe: Option<f64>,
    pub rank_m: Option<usize>,
    pub rank_a: Option<usize>,
}

/// Root mean squared difference `‖B − C‖_F / √(n1 n2)`.
pub fn rmse<T: Real>(b: &DenseMatrix<T>, c: &DenseMatrix<T>) -> Result<T> {
    b.check_same_shape(c, "rmse")?;
    let n: T = cast(b.len() as f64);
    Ok(b.sub(c)?.frobenius() / n.sqrt())
}

/// Normalization convention for [`hellinger_sq`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HellingerNorm {
    /// Divide the entrywise sum by `n1·n2` (per-entry mean, the default).
    Mean,
    /// Divide the entrywise sum by `√(n1·n2)`.
    SqrtN,
}

/// Squared Hellinger distance between probability matrices:
/// entrywise `(√s − √t)² + (√(1−s) − √(1−t))²`, aggregated per
/// [`HellingerNorm`].
pub fn hellinger_sq<T: Real>(
    s: &DenseMatrix<T>,
    t: &DenseMatrix<T>,
    normalization: HellingerNorm,
) -> Result<T> {
    s.check_same_shape(t, "hellinger_sq")?;
    for m in [s, t] {
        if m.values().iter().any(|&v| v < T::zero() || v > T::one()) {
            return Err(Error::invalid(
                "hellinger_sq requires entries in [0, 1]",
            ));
        }
    }
    let mut acc = T::zero();
    Zip::from(s.array()).and(t.array()).for_each(|&sv, &tv| {
        let d1 = sv.sqrt() - tv.sqrt();
        let d2 = (T::one() - sv).sqrt() - (T::one() - tv).sqrt();
        acc += d1 * d1 + d2 * d2;
    });
    let n: T = cast(s.len() as f64);
    Ok(match normalization {
        HellingerNorm::Mean => acc / n,
        HellingerNorm::SqrtN => acc / n.sqrt(),
    })
}

/// Relative squared error on the unobserved entries:
/// `‖W⋆∘(Â−A⋆)‖_F² / ‖W⋆∘A⋆‖_F²` with `W⋆ = 1 − W`.
pub fn test_error<T: Real>(
    a_hat: &DenseMatrix<T>,
    a_star: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
) -> Result<T> {
    a_hat.check_same_shape(a_star, "test_error")?;
    a_hat.check_same_shape(w, "test_error")?;
    let mut num = T::zero();
    let mut den = T::zero();
    Zip::from(a_hat.array())
        .and(a_star.array())
        .and(w.array())
        .for_each(|&ah, &a, &wv| {
            let miss = T::one() - wv;
            let d = miss * (ah - a);
            num += d * d;
            let s = miss * a;
            den += s * s;
        });
    if den == T::zero() {
        return Err(Error::ZeroDenominator {
            context: "test_error: target is zero on every unobserved entry",
        });
    }
    Ok(num / den)
}

/// Root mean squared prediction error over a test mask:
/// `‖W_test∘(Â−Y)‖_F / √(Σ w_test)`.
pub fn rmspe<T: Real>(
    a_hat: &DenseMatrix<T>,
    y_test: &DenseMatrix<T>,
    w_test: &DenseMatrix<T>,
) -> Result<T> {
    a_hat.check_same_shape(y_test, "rmspe")?;
    a_hat.check_same_shape(w_test, "rmspe")?;
    let count = w_test.sum();
    if count <= T::zero() {
        return Err(Error::ZeroDenominator {
            context: "rmspe: empty test set",
        });
    }
    let mut acc = T::zero();
    Zip::from(a_hat.array())
        .and(y_test.array())
        .and(w_test.array())
        .for_each(|&ah, &yv, &wv| {
            let d = wv * (ah - yv);
            acc += d * d;
        });
    Ok((acc / count).sqrt())
}

/// Count of singular values above `rel_tol · σ₁` (0 for a zero matrix).
pub fn numerical_rank<T: Real>(m: &DenseMatrix<T>, rel_tol: f64) -> Result<usize> {
    let s = singular_values_arr(m.array())?;
    Ok(rank_from_singular_values(&s, cast(rel_tol)))
}

/// Convenience: squared-distance average `d²(B,C) = ‖B−C‖_F²/(n1 n2)`.
pub fn mean_sq_distance<T: Real>(b: &DenseMatrix<T>, c: &DenseMatrix<T>) -> Result<f64> {
    let r = rmse(b, c)?;
    Ok(to_f64(r) * to_f64(r))
}
