//! Inverse-probability-weighted nuclear-norm-regularized completion of the
//! target matrix.
//!
//! Given noisy observations `Y`, the observation mask `W` and an estimate
//! `Θ̂` of the observation probabilities, [`fit_completion`] minimizes
//!
//! ```text
//! (n1 n2)⁻¹ Σ_ij w_ij θ̂_ij⁻¹ (a_ij − y_ij)²  +  τ‖A‖_*
//! ```
//!
//! over the box `‖A‖_∞ ≤ a`, by the same monotone accelerated proximal
//! gradient scheme used for the probability fit. The proximal step
//! [`prox_nuclear_box`] composes the nuclear prox with the box constraint
//! exactly via a two-block ADMM split; when the plain soft-thresholded
//! solution already lies inside the box it is returned directly (it is then
//! the exact constrained prox as well).

use crate::error::{Error, PartialIterate, Result};
use crate::linalg::{clip_arr, rank_from_singular_values, singular_values_arr, svt_arr};
use crate::matrix::DenseMatrix;
use crate::real::{cast, to_f64, Real};
use crate::theta::{SolverConfig, ThetaEstimate};
use ndarray::{Array2, Zip};

/// Output of [`fit_completion`].
#[derive(Debug, Clone)]
pub struct CompletionResult<T> {
    pub a_hat: DenseMatrix<T>,
    pub tau: T,
    pub a_bound: T,
    /// Singular values above `1e-8 · σ₁`.
    pub numerical_rank: usize,
    pub iterations: usize,
    pub final_objective: T,
    /// Objective after each accepted iteration (nonincreasing).
    pub objective_trace: Vec<T>,
}

/// Default completion box bound: `1.2 × max|y_ij|` over observed entries
/// (a stand-in for an a-priori bound on `‖A⋆‖_∞`).
pub fn default_a_bound<T: Real>(y: &DenseMatrix<T>, w: &DenseMatrix<T>) -> Result<T> {
    y.check_same_shape(w, "default_a_bound")?;
    let mut max = T::zero();
    Zip::from(y.array()).and(w.array()).for_each(|&yv, &wv| {
        if wv == T::one() {
            max = max.max(yv.abs());
        }
    });
    if max == T::zero() {
        return Err(Error::invalid(
            "cannot derive a box bound: no observed entries (or all zero)",
        ));
    }
    Ok(cast::<T>(1.2) * max)
}

/// The weighted empirical risk
/// `(n1 n2)⁻¹ Σ_ij w_ij θ_ij⁻¹ (a_ij − y_ij)²`.
pub fn weighted_risk<T: Real>(
    a: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    theta: &ThetaEstimate<T>,
) -> Result<T> {
    a.check_same_shape(y, "weighted_risk")?;
    a.check_same_shape(w, "weighted_risk")?;
    a.check_same_shape(&theta.theta, "weighted_risk")?;
    let n_total: T = cast(a.len() as f64);
    let mut acc = T::zero();
    Zip::from(a.array())
        .and(y.array())
        .and(w.array())
        .and(theta.theta.array())
        .for_each(|&av, &yv, &wv, &tv| {
            let d = av - yv;
            acc += wv / tv * d * d;
        });
    Ok(acc / n_total)
}

// ---------------------------------------------------------------------------
// Nuclear + box prox
// ---------------------------------------------------------------------------

pub(crate) struct BoxAdmmState<T> {
    g: Array2<T>,
    h: Array2<T>,
}

fn frob<T: Real>(a: &Array2<T>) -> T {
    a.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

fn frob_diff<T: Real>(a: &Array2<T>, b: &Array2<T>) -> T {
    Zip::from(a)
        .and(b)
        .fold(T::zero(), |acc, &x, &y| {
            let d = x - y;
            acc + d * d
        })
        .sqrt()
}

/// Two-block ADMM for `min ½‖X − T‖² + w‖X‖_*  s.t. ‖X‖_∞ ≤ bound`.
///
/// Returns the `X` block and its nuclear norm. If the unconstrained
/// soft-thresholded solution is already feasible it is returned without
/// entering the splitting loop.
pub(crate) fn prox_nuclear_box_warm<T: Real>(
    t: &Array2<T>,
    w: T,
    bound: T,
    cfg: &SolverConfig<T>,
    state: &mut Option<BoxAdmmState<T>>,
) -> Result<(Array2<T>, T)> {
    if w == T::zero() {
        let x = clip_arr(t, -bound, bound);
        let nuc = singular_values_arr(&x)?
            .iter()
            .fold(T::zero(), |a, &b| a + b);
        return Ok((x, nuc));
    }
    let (x, shrunk) = svt_arr(t, w)?;
    let nuc = shrunk.iter().fold(T::zero(), |a, &b| a + b);
    let max_abs = x.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    if max_abs <= bound {
        return Ok((x, nuc));
    }

    let u = cfg.u;
    if state.is_none() {
        *state = Some(BoxAdmmState {
            g: clip_arr(t, -bound, bound),
            h: Array2::zeros(t.raw_dim()),
        });
    }
    let st = state.as_mut().unwrap();

    let mut x = Array2::zeros(t.raw_dim());
    let mut x_nuclear = T::zero();
    let mut residual = T::infinity();
    for _iter in 0..cfg.max_admm_iters {
        let c = Zip::from(&st.g).and(&st.h).map_collect(|&g, &h| g + h / u);
        let (xn, shrunk) = svt_arr(&c, w / u)?;
        x = xn;
        x_nuclear = shrunk.iter().fold(T::zero(), |a, &b| a + b);

        let g_new = clip_arr(
            &Zip::from(t)
                .and(&x)
                .and(&st.h)
                .map_collect(|&tv, &xv, &h| (tv + u * xv - h) / (T::one() + u)),
            -bound,
            bound,
        );
        let r = frob_diff(&x, &g_new);
        let s = u * frob_diff(&g_new, &st.g);
        Zip::from(&mut st.h)
            .and(&x)
            .and(&g_new)
            .for_each(|h, &xv, &g| *h = *h - u * (xv - g));
        st.g = g_new;

        residual = r.max(s) / T::one().max(frob(&x));
        if residual <= cfg.admm_tol {
            return Ok((x, x_nuclear));
        }
    }
    Err(Error::IterationCap {
        solver: "prox_nuclear_box",
        iterations: cfg.max_admm_iters,
        residual: to_f64(residual),
        last: Some(Box::new(PartialIterate {
            n_rows: x.nrows(),
            n_cols: x.ncols(),
            values: x.iter().map(|&v| to_f64(v)).collect(),
            mu: None,
            objective: to_f64(cast::<T>(0.5) * frob_diff(&x, t).powi(2) + w * x_nuclear),
        })),
    })
}

/// Exact proximal operator of `w‖·‖_*` restricted to the box
/// `‖X‖_∞ ≤ a_bound`: the minimizer of `½‖X − T‖_F² + w‖X‖_*` over the
/// box.
pub fn prox_nuclear_box<T: Real>(
    t: &DenseMatrix<T>,
    w: T,
    a_bound: T,
    cfg: &SolverConfig<T>,
) -> Result<DenseMatrix<T>> {
    if w < T::zero() {
        return Err(Error::invalid("nuclear weight must be nonnegative"));
    }
    if a_bound <= T::zero() {
        return Err(Error::invalid("box bound must be positive"));
    }
    cfg.validate()?;
    let mut state = None;
    let (x, _) = prox_nuclear_box_warm(t.array(), w, a_bound, cfg, &mut state)?;
    Ok(DenseMatrix::from_array_unchecked(x))
}

// ---------------------------------------------------------------------------
// APG solver
// ---------------------------------------------------------------------------

/// Weighted nuclear-norm-regularized completion (see module docs).
///
/// Unobserved entries of `Y` are ignored (conventionally zero-filled).
/// The accepted-objective sequence is nonincreasing; iteration stops when
/// the relative objective change drops below `cfg.outer_tol`.
pub fn fit_completion<T: Real>(
    y: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    theta: &ThetaEstimate<T>,
    tau: T,
    a_bound: T,
    cfg: &SolverConfig<T>,
) -> Result<CompletionResult<T>> {
    y.check_same_shape(w, "fit_completion")?;
    y.check_same_shape(&theta.theta, "fit_completion")?;
    if !w.is_binary() {
        return Err(Error::invalid("mask matrix must be 0/1-valued"));
    }
    if tau < T::zero() {
        return Err(Error::invalid("tau must be nonnegative"));
    }
    if !(a_bound > T::zero()) {
        return Err(Error::invalid("a_bound must be positive"));
    }
    cfg.validate()?;

    let n_total: T = cast(y.len() as f64);
    let two = cast::<T>(2.0);
    // Inverse-probability weights on observed entries, zero elsewhere.
    let omega = Zip::from(w.array())
        .and(theta.theta.array())
        .map_collect(|&wv, &tv| wv / tv);
    let y_arr = y.array();

    let risk = |a: &Array2<T>| -> T {
        Zip::from(&omega)
            .and(a)
            .and(y_arr)
            .fold(T::zero(), |acc, &o, &av, &yv| {
                let d = av - yv;
                acc + o * d * d
            })
            / n_total
    };
    let grad = |a: &Array2<T>| -> Array2<T> {
        Zip::from(&omega)
            .and(a)
            .and(y_arr)
            .map_collect(|&o, &av, &yv| two / n_total * o * (av - yv))
    };

    let mut a = Array2::<T>::zeros(y_arr.raw_dim());
    let mut a_nuc = T::zero();
    let mut obj = risk(&a);
    let mut a_prev = a.clone();
    let mut t_mom = T::one();
    let mut momentum_on = false;
    let mut big_l = cfg.l0;
    let mut prox_state = None;
    let mut trace = vec![obj];
    let mut accepted = 0usize;
    let mut rel_change = T::infinity();

    for _outer in 0..cfg.max_outer_iters {
        let a_y = if momentum_on {
            let t_next =
                (T::one() + (T::one() + cast::<T>(4.0) * t_mom * t_mom).sqrt()) / two;
            let omega_m = (t_mom - T::one()) / t_next;
            t_mom = t_next;
            Zip::from(&a)
                .and(&a_prev)
                .map_collect(|&cur, &prev| cur + omega_m * (cur - prev))
        } else {
            t_mom = T::one();
            a.clone()
        };

        let g_y = grad(&a_y);
        let risk_y = risk(&a_y);

        let (a_c, nuc_c, risk_c) = loop {
            let t_mat = Zip::from(&a_y).and(&g_y).map_collect(|&av, &gv| av - gv / big_l);
            let (a_c, nuc_c) =
                prox_nuclear_box_warm(&t_mat, tau / big_l, a_bound, cfg, &mut prox_state)?;
            let risk_c = risk(&a_c);
            let ip = Zip::from(&a_c)
                .and(&a_y)
                .and(&g_y)
                .fold(T::zero(), |acc, &ac, &ay, &gv| acc + (ac - ay) * gv);
            let sq = frob_diff(&a_c, &a_y).powi(2);
            let quad = risk_y + ip + big_l / two * sq;
            let slack = cast::<T>(1e-10) * T::one().max(quad.abs());
            if risk_c <= quad + slack {
                break (a_c, nuc_c, risk_c);
            }
            big_l = big_l * cfg.backtrack_factor;
            if big_l > cast(1e18) {
                return Err(Error::invalid(
                    "backtracking failed to find a majorizing step size",
                ));
            }
        };

        let obj_c = risk_c + tau * nuc_c;
        let monotone_slack = cast::<T>(1e-12) * T::one().max(obj.abs());
        if obj_c > obj + monotone_slack {
            if momentum_on {
                momentum_on = false;
                continue;
            }
            rel_change = T::zero();
            break;
        }

        a_prev = a;
        a = a_c;
        a_nuc = nuc_c;
        let prev_obj = obj;
        obj = obj_c;
        accepted += 1;
        trace.push(obj);
        momentum_on = true;

        rel_change = (prev_obj - obj).abs() / T::one().max(obj.abs());
        if rel_change < cfg.outer_tol {
            break;
        }
    }
    let _ = a_nuc;

    if rel_change >= cfg.outer_tol {
        return Err(Error::IterationCap {
            solver: "fit_completion",
            iterations: cfg.max_outer_iters,
            residual: to_f64(rel_change),
            last: Some(Box::new(PartialIterate {
                n_rows: a.nrows(),
                n_cols: a.ncols(),
                values: a.iter().map(|&v| to_f64(v)).collect(),
                mu: None,
                objective: to_f64(obj),
            })),
        });
    }

    let a = clip_arr(&a, -a_bound, a_bound);
    let rank = rank_from_singular_values(&singular_values_arr(&a)?, cast(1e-8));
    Ok(CompletionResult {
        a_hat: DenseMatrix::from_array_unchecked(a),
        tau,
        a_bound,
        numerical_rank: rank,
        iterations: accepted,
        final_objective: obj,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theta::Provenance;
    use crate::{norms, svt, Mat};
    use approx::assert_abs_diff_eq;

    fn uniform_theta(n1: usize, n2: usize, c: f64) -> ThetaEstimate<f64> {
        ThetaEstimate::from_matrix(&Mat::constant(n1, n2, c), Provenance::Known)
    }

    #[test]
    fn weighted_risk_zero_on_agreement() {
        let y = Mat::new(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let w = Mat::new(2, 2, vec![1., 0., 1., 1.]).unwrap();
        let theta = uniform_theta(2, 2, 0.5);
        // A equals Y on observed entries; differs where unobserved.
        let a = Mat::new(2, 2, vec![1., -7., 3., 4.]).unwrap();
        let r = weighted_risk(&a, &y, &w, &theta).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn weighted_risk_constant_theta_scaling() {
        let y = Mat::new(2, 3, vec![1., -2., 0.5, 3., 0., 1.5]).unwrap();
        let a = Mat::new(2, 3, vec![0.7, -1., 0.9, 2.2, 0.4, 1.0]).unwrap();
        let w = Mat::new(2, 3, vec![1., 1., 0., 1., 0., 1.]).unwrap();
        let c = 0.37;
        let weighted = weighted_risk(&a, &y, &w, &uniform_theta(2, 3, c)).unwrap();
        let unweighted = weighted_risk(&a, &y, &w, &uniform_theta(2, 3, 1.0 - crate::EPS_PROB))
            .unwrap();
        assert_abs_diff_eq!(weighted, unweighted / c, epsilon = 1e-12);
    }

    #[test]
    fn weighted_risk_matches_naive_sum() {
        let y = Mat::new(3, 3, (0..9).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let a = Mat::new(3, 3, (0..9).map(|i| (i as f64).sin()).collect()).unwrap();
        let w = Mat::new(3, 3, (0..9).map(|i| ((i % 2) == 0) as u8 as f64).collect()).unwrap();
        let theta_mat = Mat::from_shape_fn(3, 3, |(i, j)| 0.2 + 0.08 * (i * 3 + j) as f64);
        let theta = ThetaEstimate::from_matrix(&theta_mat, Provenance::Known);
        let mut expect = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = a.get(i, j) - y.get(i, j);
                expect += w.get(i, j) / theta_mat.get(i, j) * d * d;
            }
        }
        expect /= 9.0;
        assert_abs_diff_eq!(
            weighted_risk(&a, &y, &w, &theta).unwrap(),
            expect,
            epsilon = 1e-12
        );
    }

    #[test]
    fn prox_zero_weight_is_clipping() {
        let t = Mat::new(2, 2, vec![3., -0.5, 0.2, -4.]).unwrap();
        let out = prox_nuclear_box(&t, 0.0, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(out.values(), &[1., -0.5, 0.2, -1.]);
    }

    #[test]
    fn prox_inactive_box_is_svt() {
        let t = Mat::new(3, 3, (0..9).map(|i| (i as f64 * 0.77).cos()).collect()).unwrap();
        let shrunk = svt(&t, 0.4).unwrap();
        let bound = shrunk.max_abs() * 2.0;
        let out = prox_nuclear_box(&t, 0.4, bound, &SolverConfig::default()).unwrap();
        assert!(out.sub(&shrunk).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn prox_output_stays_in_box() {
        let t = Mat::from_shape_fn(5, 5, |(i, j)| ((i * 5 + j) as f64 * 1.3).sin() * 3.0);
        let out = prox_nuclear_box(&t, 0.5, 0.8, &SolverConfig::default()).unwrap();
        assert!(out.max_abs() <= 0.8 + 1e-9);
    }

    #[test]
    fn full_data_no_penalty_recovers_y() {
        let y = Mat::new(3, 3, (0..9).map(|i| (i as f64) * 0.5 - 2.0).collect()).unwrap();
        let w = Mat::constant(3, 3, 1.0);
        let theta = uniform_theta(3, 3, 1.0 - crate::EPS_PROB);
        let cfg = SolverConfig {
            outer_tol: 1e-12,
            ..Default::default()
        };
        let fit = fit_completion(&y, &w, &theta, 0.0, f64::INFINITY, &cfg).unwrap();
        assert!(fit.a_hat.sub(&y).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn large_tau_keeps_zero_solution() {
        let y = Mat::new(3, 3, (0..9).map(|i| ((i * 11) % 5) as f64 - 2.0).collect()).unwrap();
        let w = Mat::from_shape_fn(3, 3, |(i, j)| ((i + j) % 2) as f64);
        let theta = uniform_theta(3, 3, 0.5);
        // Zero is optimal iff σ₁(∇risk(0)) ≤ τ.
        let grad0 = Mat::from_shape_fn(3, 3, |(i, j)| {
            -2.0 / 9.0 * w.get(i, j) / 0.5 * y.get(i, j)
        });
        let tau = norms(&grad0).unwrap().spectral * 1.01;
        let fit = fit_completion(&y, &w, &theta, tau, 100.0, &SolverConfig::default()).unwrap();
        assert!(fit.a_hat.max_abs() < 1e-10, "zero solution should persist");
        assert_eq!(fit.numerical_rank, 0);
    }

    #[test]
    fn objective_trace_monotone_and_box_respected() {
        let y = Mat::from_shape_fn(6, 5, |(i, j)| ((i as f64) - (j as f64) * 0.7).sin() * 2.0);
        let w = Mat::from_shape_fn(6, 5, |(i, j)| ((i * 5 + j) % 3 != 0) as u8 as f64);
        let theta = uniform_theta(6, 5, 0.6);
        let fit = fit_completion(&y, &w, &theta, 0.02, 1.5, &SolverConfig::default()).unwrap();
        assert!(fit.a_hat.max_abs() <= 1.5 + 1e-9);
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10 * pair[0].abs().max(1.0));
        }
        assert!(fit.a_hat.values().iter().all(|v| v.is_finite()));
    }
}
