//! Inverse link functions and the Bernoulli log-likelihood with its
//! gradients.
//!
//! Scalar evaluations run in `f64` internally and are cast to the working
//! type at the boundary, which keeps `f32` results correctly rounded.

use crate::error::Result;
use crate::matrix::DenseMatrix;
use crate::real::{cast, Real};
use crate::EPS_PROB;
use ndarray::{Array2, Zip};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_2PI: f64 = 1.837877066409345483560659472811; // ln(2π)

/// Inverse link mapping a linear predictor to a probability in (0,1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Link {
    /// `f(m) = e^m / (1 + e^m)`.
    Logistic,
    /// Standard normal cumulative distribution function.
    Probit,
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn logistic(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn normal_pdf(m: f64) -> f64 {
    (-0.5 * m * m - 0.5 * LN_2PI).exp()
}

#[inline]
fn normal_cdf(m: f64) -> f64 {
    0.5 * libm::erfc(-m / SQRT_2)
}

/// `φ(m)/Φ(m)`, stable across the whole real line.
///
/// The direct ratio is fine for `m > -6`; below that both numerator and
/// denominator are tiny, so the ratio is formed in log space, and past the
/// point where `Φ` underflows entirely the asymptotic expansion of the
/// inverse Mills ratio takes over.
fn normal_hazard(m: f64) -> f64 {
    if m > -6.0 {
        normal_pdf(m) / normal_cdf(m)
    } else if m > -37.0 {
        let ln_pdf = -0.5 * m * m - 0.5 * LN_2PI;
        let ln_cdf = normal_cdf(m).ln();
        (ln_pdf - ln_cdf).exp()
    } else {
        let x = -m;
        let x2 = x * x;
        x + 1.0 / x - 2.0 / (x * x2) + 10.0 / (x2 * x2 * x) - 74.0 / (x2 * x2 * x2 * x)
    }
}

/// Rational approximation of the standard normal quantile (Acklam), with a
/// Newton polish to full double precision.
fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    x - (normal_cdf(x) - p) / normal_pdf(x)
}

impl Link {
    /// `f(m)`, strictly increasing with range (0,1).
    pub fn value<T: Real>(self, m: T) -> T {
        let m = m.to_f64().unwrap();
        cast(match self {
            Link::Logistic => logistic(m),
            Link::Probit => normal_cdf(m),
        })
    }

    /// `f′(m) > 0`.
    pub fn derivative<T: Real>(self, m: T) -> T {
        let m = m.to_f64().unwrap();
        cast(match self {
            Link::Logistic => {
                let f = logistic(m);
                f * (1.0 - f)
            }
            Link::Probit => normal_pdf(m),
        })
    }

    /// `f⁻¹(p)` for `p ∈ (0,1)`.
    pub fn inverse<T: Real>(self, p: T) -> T {
        let p = p.to_f64().unwrap();
        cast(match self {
            Link::Logistic => (p / (1.0 - p)).ln(),
            Link::Probit => normal_quantile(p),
        })
    }

    /// `ln f(m)` with the probability clamped to `[EPS_PROB, 1 − EPS_PROB]`.
    #[inline]
    fn log_prob(self, m: f64) -> f64 {
        let ln_eps = EPS_PROB.ln();
        let ln_one_minus_eps = (-EPS_PROB).ln_1p();
        let raw = match self {
            Link::Logistic => -softplus(-m),
            Link::Probit => {
                if m < -37.0 {
                    f64::NEG_INFINITY
                } else {
                    normal_cdf(m).ln()
                }
            }
        };
        raw.clamp(ln_eps, ln_one_minus_eps)
    }

    /// Per-entry gradient of the Bernoulli log-likelihood in `m`:
    /// `w·f′/f − (1−w)·f′/(1−f)`. For the logistic link this collapses to
    /// `w − f(m)` exactly.
    #[inline]
    fn grad_entry(self, w: f64, m: f64) -> f64 {
        match self {
            Link::Logistic => w - logistic(m),
            Link::Probit => w * normal_hazard(m) - (1.0 - w) * normal_hazard(-m),
        }
    }
}

pub(crate) fn log_likelihood_arr<T: Real>(w: &Array2<T>, m: &Array2<T>, link: Link) -> T {
    let mut acc = 0.0f64;
    Zip::from(w).and(m).for_each(|&wv, &mv| {
        let wv = wv.to_f64().unwrap();
        let mv = mv.to_f64().unwrap();
        acc += wv * link.log_prob(mv) + (1.0 - wv) * link.log_prob(-mv);
    });
    cast(acc)
}

pub(crate) fn grad_arr<T: Real>(w: &Array2<T>, m: &Array2<T>, link: Link) -> Array2<T> {
    let mut out = Array2::zeros(w.raw_dim());
    Zip::from(&mut out).and(w).and(m).for_each(|o, &wv, &mv| {
        *o = cast(link.grad_entry(wv.to_f64().unwrap(), mv.to_f64().unwrap()));
    });
    out
}

pub(crate) fn grad_mu_arr<T: Real>(w: &Array2<T>, m: &Array2<T>, link: Link) -> T {
    let mut acc = 0.0f64;
    Zip::from(w).and(m).for_each(|&wv, &mv| {
        acc += link.grad_entry(wv.to_f64().unwrap(), mv.to_f64().unwrap());
    });
    cast(acc)
}

/// Bernoulli log-likelihood `Σ w·ln f(m) + (1−w)·ln(1−f(m))`.
///
/// Probabilities are clamped away from {0,1} before the logs, so the value
/// is finite for any finite predictor. Note `1 − f(m) = f(−m)` for both
/// links, which is used for the complement term.
pub fn log_likelihood<T: Real>(
    w: &DenseMatrix<T>,
    m: &DenseMatrix<T>,
    link: Link,
) -> Result<T> {
    w.check_same_shape(m, "log_likelihood")?;
    Ok(log_likelihood_arr(w.array(), m.array(), link))
}

/// Entrywise gradient of [`log_likelihood`] in the predictor matrix.
///
/// Exact wherever the internal probability clamp is inactive, i.e. for
/// predictors with `f(m)` inside `[EPS_PROB, 1 − EPS_PROB]`.
pub fn grad_m<T: Real>(
    w: &DenseMatrix<T>,
    m: &DenseMatrix<T>,
    link: Link,
) -> Result<DenseMatrix<T>> {
    w.check_same_shape(m, "grad_m")?;
    Ok(DenseMatrix::from_array_unchecked(grad_arr(
        w.array(),
        m.array(),
        link,
    )))
}

/// Derivative of `μ ↦ log_likelihood(W, μJ + Z)`: the sum of [`grad_m`].
pub fn grad_mu<T: Real>(w: &DenseMatrix<T>, m: &DenseMatrix<T>, link: Link) -> Result<T> {
    w.check_same_shape(m, "grad_mu")?;
    Ok(grad_mu_arr(w.array(), m.array(), link))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Mat;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_values() {
        assert_abs_diff_eq!(Link::Logistic.value(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(Link::Logistic.value(3f64.ln()), 0.75, epsilon = 1e-14);
        // Overflow-safe branches.
        assert!(Link::Logistic.value(800.0f64) <= 1.0);
        assert!(Link::Logistic.value(-800.0f64) >= 0.0);
    }

    #[test]
    fn probit_values() {
        assert_abs_diff_eq!(Link::Probit.value(0.0), 0.5, epsilon = 1e-15);
        // Φ(1.96) to published precision.
        assert_abs_diff_eq!(Link::Probit.value(1.96), 0.975002104851780, epsilon = 1e-12);
    }

    #[test]
    fn derivatives_at_zero() {
        assert_abs_diff_eq!(Link::Logistic.derivative(0.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(
            Link::Probit.derivative(0.0),
            0.3989422804014327,
            epsilon = 1e-13
        );
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-6;
        for link in [Link::Logistic, Link::Probit] {
            let mut m = -10.0;
            while m <= 10.0 {
                let fd: f64 = (link.value(m + h) - link.value(m - h)) / (2.0 * h);
                let an: f64 = link.derivative(m);
                assert!(
                    (fd - an).abs() <= 1e-6 * an.max(1e-300),
                    "{link:?} derivative mismatch at m={m}: fd={fd}, analytic={an}"
                );
                m += 0.5;
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        for link in [Link::Logistic, Link::Probit] {
            for &p in &[1e-10, 1e-4, 0.2, 0.5, 0.77, 1.0 - 1e-6] {
                let m: f64 = link.inverse(p);
                assert_abs_diff_eq!(link.value(m), p, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn log_likelihood_single_entries() {
        let w = Mat::new(1, 1, vec![1.0]).unwrap();
        let m = Mat::zeros(1, 1);
        let ll = log_likelihood(&w, &m, Link::Logistic).unwrap();
        assert_abs_diff_eq!(ll, 0.5f64.ln(), epsilon = 1e-12);

        let w = Mat::new(1, 2, vec![1.0, 0.0]).unwrap();
        let m = Mat::zeros(1, 2);
        let ll = log_likelihood(&w, &m, Link::Logistic).unwrap();
        assert_abs_diff_eq!(ll, 2.0 * 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_matches_naive_sum() {
        // Independent per-entry oracle with explicit branches.
        let w = Mat::new(4, 5, (0..20).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect()).unwrap();
        let m = Mat::from_shape_fn(4, 5, |(i, j)| 0.7 * i as f64 - 0.3 * j as f64 - 0.5);
        for link in [Link::Logistic, Link::Probit] {
            let mut expect = 0.0;
            for i in 0..4 {
                for j in 0..5 {
                    let p: f64 = link.value(m.get(i, j));
                    let p = p.clamp(EPS_PROB, 1.0 - EPS_PROB);
                    expect += if w.get(i, j) == 1.0 { p.ln() } else { (1.0 - p).ln() };
                }
            }
            let got = log_likelihood(&w, &m, link).unwrap();
            assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_likelihood_is_finite_and_nonpositive() {
        let w = Mat::new(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let m = Mat::new(2, 2, vec![500., -500., 40., -40.]).unwrap();
        for link in [Link::Logistic, Link::Probit] {
            let ll: f64 = log_likelihood(&w, &m, link).unwrap();
            assert!(ll.is_finite());
            assert!(ll <= 0.0);
        }
    }

    #[test]
    fn logistic_gradient_identity() {
        let w = Mat::new(1, 2, vec![1.0, 0.0]).unwrap();
        let m = Mat::zeros(1, 2);
        let g = grad_m(&w, &m, Link::Logistic).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(0, 1), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let w = Mat::new(3, 4, (0..12).map(|i| (i % 2) as f64).collect()).unwrap();
        let m = Mat::from_shape_fn(3, 4, |(i, j)| (i as f64 - 1.0) * 0.9 + 0.4 * j as f64 - 1.0);
        let h = 1e-6;
        for link in [Link::Logistic, Link::Probit] {
            let g = grad_m(&w, &m, link).unwrap();
            for i in 0..3 {
                for j in 0..4 {
                    let mut mp = m.clone().into_array();
                    mp[(i, j)] += h;
                    let mut mm = m.clone().into_array();
                    mm[(i, j)] -= h;
                    let lp = log_likelihood_arr(w.array(), &mp, link);
                    let lm = log_likelihood_arr(w.array(), &mm, link);
                    let fd = (lp - lm) / (2.0 * h);
                    let an = g.get(i, j);
                    assert!(
                        (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                        "{link:?} grad mismatch at ({i},{j}): fd={fd}, analytic={an}"
                    );
                }
            }
        }
    }

    #[test]
    fn grad_mu_stationary_at_exact_probabilities() {
        // Fractional w = F(M) puts the likelihood at its maximum in μ.
        let m = Mat::from_shape_fn(2, 3, |(i, j)| 0.3 * i as f64 - 0.2 * j as f64);
        for link in [Link::Logistic, Link::Probit] {
            let w = m.map(|v| link.value(v));
            let g: f64 = grad_mu(&w, &m, link).unwrap();
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn grad_mu_all_observed_at_zero() {
        let w = Mat::constant(2, 2, 1.0);
        let m = Mat::zeros(2, 2);
        let g: f64 = grad_mu(&w, &m, Link::Logistic).unwrap();
        assert_abs_diff_eq!(g, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn concavity_along_segments() {
        let w = Mat::new(3, 3, (0..9).map(|i| ((i * 5) % 2) as f64).collect()).unwrap();
        let m1 = Mat::from_shape_fn(3, 3, |(i, j)| (i + j) as f64 * 0.4 - 1.0);
        let m2 = Mat::from_shape_fn(3, 3, |(i, j)| (i as f64 - j as f64) * 0.6);
        for link in [Link::Logistic, Link::Probit] {
            for &lam in &[0.25, 0.5, 0.9] {
                let mix = Mat::from_array(
                    m1.array() * lam + &(m2.array() * (1.0 - lam)),
                )
                .unwrap();
                let l_mix: f64 = log_likelihood(&w, &mix, link).unwrap();
                let l1: f64 = log_likelihood(&w, &m1, link).unwrap();
                let l2: f64 = log_likelihood(&w, &m2, link).unwrap();
                assert!(l_mix >= lam * l1 + (1.0 - lam) * l2 - 1e-10);
            }
        }
    }
}
