//! Estimation of the observation-probability matrix.
//!
//! The probability of observing entry `(i,j)` is modeled as
//! `θ_ij = f(μ + z_ij)` with `f` an inverse link, `|μ| ≤ α1`,
//! `‖Z‖_∞ ≤ α2` and `1ᵀZ1 = 0`. Fitting maximizes the Bernoulli
//! log-likelihood minus a nuclear-norm penalty `λ‖Z‖_*`:
//!
//! * [`fit_unconstrained`] solves the full problem with an accelerated
//!   proximal gradient loop; its inner proximal step [`admm_prox_z`]
//!   handles the nuclear norm, the mean-zero constraint and the box
//!   simultaneously with a three-block ADMM splitting.
//! * [`refit_constrained`] re-estimates `Z` under a tighter box
//!   `‖Z‖_∞ ≤ β` with `μ` frozen; the mean-zero constraint is dropped,
//!   so the inner prox reduces to the two-block nuclear-plus-box split.
//! * [`winsorize`] / [`beta_from_fraction`] implement direct entry
//!   clipping and the winsorized-fraction rule for choosing `β`.
//! * [`fit_one_bit`] is the ablation that penalizes the whole predictor
//!   with no offset split.

use crate::completion::prox_nuclear_box_warm;
use crate::error::{Error, PartialIterate, Result};
use crate::linalg::{center_arr, clip_arr, singular_values_arr, svt_arr};
use crate::link::{grad_arr, grad_mu_arr, log_likelihood_arr, Link};
use crate::matrix::DenseMatrix;
use crate::real::{cast, to_f64, Real};
use crate::EPS_PROB;
use ndarray::{Array2, Zip};

/// Step-size, tolerance and iteration-cap parameters shared by the
/// accelerated proximal gradient loops and their ADMM inner solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<T> {
    /// Initial majorization constant for backtracking. The default 0.25 is
    /// the exact per-entry curvature bound of the logistic log-likelihood.
    pub l0: T,
    /// Multiplier applied to `L` when the majorization test fails (> 1).
    pub backtrack_factor: T,
    pub max_outer_iters: usize,
    pub max_admm_iters: usize,
    /// Stop when the relative objective change between accepted iterates
    /// falls below this.
    pub outer_tol: T,
    /// ADMM stopping threshold on the scaled primal/dual residual.
    pub admm_tol: T,
    /// ADMM penalty parameter.
    pub u: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            l0: cast(0.25),
            backtrack_factor: cast(2.0),
            max_outer_iters: 500,
            max_admm_iters: 2000,
            outer_tol: cast(1e-6),
            admm_tol: cast(1e-8),
            u: T::one(),
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.l0 <= T::zero()
            || self.backtrack_factor <= T::one()
            || self.outer_tol <= T::zero()
            || self.admm_tol <= T::zero()
            || self.u <= T::zero()
        {
            return Err(Error::invalid("solver configuration must be positive"));
        }
        Ok(())
    }
}

/// The pair `(μ, Z)` representing the predictor `M = μJ + Z`.
#[derive(Debug, Clone)]
pub struct PredictorDecomposition<T> {
    pub mu: T,
    pub z: DenseMatrix<T>,
}

impl<T: Real> PredictorDecomposition<T> {
    /// Materialize `M = μJ + Z`.
    pub fn predictor(&self) -> DenseMatrix<T> {
        let mu = self.mu;
        DenseMatrix::from_array_unchecked(self.z.array().mapv(|v| v + mu))
    }
}

/// How a probability estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    /// Penalized MLE under the full box `α2`.
    Unconstrained,
    /// Re-estimated under the tighter box `β` with `μ` frozen.
    RefitBeta,
    /// Direct winsorization of the unconstrained `Ẑ` at level `β`.
    WinsorizedBeta,
    /// Rank-1 product of row and column observation rates.
    Nw,
    /// Constant observed-fraction estimate.
    Uniform,
    /// Externally supplied probabilities (e.g. simulation ground truth).
    Known,
}

/// A probability matrix in `(0,1)` together with its provenance.
#[derive(Debug, Clone)]
pub struct ThetaEstimate<T> {
    pub theta: DenseMatrix<T>,
    pub provenance: Provenance,
    pub beta: Option<T>,
    pub decomposition: Option<PredictorDecomposition<T>>,
}

impl<T: Real> ThetaEstimate<T> {
    /// Wrap a probability matrix, clamping entries to
    /// `[EPS_PROB, 1 − EPS_PROB]`.
    pub fn from_matrix(theta: &DenseMatrix<T>, provenance: Provenance) -> Self {
        let lo: T = cast(EPS_PROB);
        let hi = T::one() - lo;
        ThetaEstimate {
            theta: DenseMatrix::from_array_unchecked(clip_arr(theta.array(), lo, hi)),
            provenance,
            beta: None,
            decomposition: None,
        }
    }

    /// Smallest estimated probability.
    pub fn theta_min(&self) -> T {
        self.theta
            .values()
            .iter()
            .fold(T::one(), |acc, &v| acc.min(v))
    }

    /// Largest estimated probability.
    pub fn theta_max(&self) -> T {
        self.theta
            .values()
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v))
    }
}

/// Diagnostics-bearing result of a penalized-MLE fit.
#[derive(Debug, Clone)]
pub struct ThetaFit<T> {
    pub decomposition: PredictorDecomposition<T>,
    /// Final value of the minimized objective `−ℓ_W + λ‖Z‖_*`.
    pub objective: T,
    /// Accepted outer iterations.
    pub iterations: usize,
    /// Objective value after each accepted outer iteration (nonincreasing).
    pub objective_trace: Vec<T>,
    pub lambda: T,
}

// ---------------------------------------------------------------------------
// Winsorization and β selection
// ---------------------------------------------------------------------------

/// Entrywise clipping to `[−β, β]`.
pub fn winsorize<T: Real>(z: &DenseMatrix<T>, beta: T) -> Result<DenseMatrix<T>> {
    if beta < T::zero() {
        return Err(Error::invalid("winsorization level must be nonnegative"));
    }
    Ok(DenseMatrix::from_array_unchecked(clip_arr(
        z.array(),
        -beta,
        beta,
    )))
}

/// `β` such that a fraction `t` of the entries of `Z` exceed it in absolute
/// value: the linear-interpolation `(1−t)`-quantile of `{|z_ij|}`.
pub fn beta_from_fraction<T: Real>(z: &DenseMatrix<T>, t: T) -> Result<T> {
    if z.is_empty() {
        return Err(Error::invalid("beta_from_fraction needs a nonempty matrix"));
    }
    let tf = to_f64(t);
    if !(0.0..1.0).contains(&tf) {
        return Err(Error::invalid("winsorized fraction must lie in [0, 1)"));
    }
    let mut abs: Vec<f64> = z.values().iter().map(|&v| to_f64(v.abs())).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = abs.len();
    let pos = (1.0 - tf) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let q = if lo + 1 < n {
        abs[lo] + frac * (abs[lo + 1] - abs[lo])
    } else {
        abs[n - 1]
    };
    Ok(cast(q))
}

/// Map a predictor decomposition through the link:
/// `θ_ij = f(μ + z_ij)` clamped to `[EPS_PROB, 1 − EPS_PROB]`.
pub fn theta_from<T: Real>(
    mu: T,
    z: &DenseMatrix<T>,
    link: Link,
    provenance: Provenance,
    beta: Option<T>,
) -> ThetaEstimate<T> {
    let lo: T = cast(EPS_PROB);
    let hi = T::one() - lo;
    let theta = z.array().mapv(|v| link.value(mu + v).min(hi).max(lo));
    ThetaEstimate {
        theta: DenseMatrix::from_array_unchecked(theta),
        provenance,
        beta,
        decomposition: Some(PredictorDecomposition { mu, z: z.clone() }),
    }
}

// ---------------------------------------------------------------------------
// Three-block ADMM prox
// ---------------------------------------------------------------------------

pub(crate) struct AdmmState<T> {
    g1: Array2<T>,
    g2: Array2<T>,
    h1: Array2<T>,
    h2: Array2<T>,
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

/// Three-block ADMM for
/// `min ½‖Z − T‖_F² + w‖Z‖_*  s.t.  ‖Z‖_∞ ≤ α2, 1ᵀZ1 = 0`,
/// with blocks `(Z, G1, G2)`, duals `(H1, H2)` and penalty `u`:
///
/// ```text
/// Z  ← svt( (G1+G2)/2 + (H1+H2)/(2u), w/(2u) )
/// G1 ← mean_center( Z − H1/u )
/// G2 ← clip( (T + u·Z − H2)/(1+u), ±α2 )
/// H1 ← H1 − u(Z − G1);  H2 ← H2 − u(Z − G2)
/// ```
///
/// Returns the `Z` block and its nuclear norm (exact, from the final
/// soft-thresholded spectrum).
pub(crate) fn admm_prox_z_warm<T: Real>(
    t: &Array2<T>,
    w: T,
    alpha2: T,
    cfg: &SolverConfig<T>,
    state: &mut Option<AdmmState<T>>,
) -> Result<(Array2<T>, T)> {
    let u = cfg.u;
    let two = cast::<T>(2.0);
    if state.is_none() {
        let z0 = clip_arr(&center_arr(t), -alpha2, alpha2);
        *state = Some(AdmmState {
            g1: z0.clone(),
            g2: z0,
            h1: Array2::zeros(t.raw_dim()),
            h2: Array2::zeros(t.raw_dim()),
        });
    }
    let st = state.as_mut().unwrap();

    let mut z = Array2::zeros(t.raw_dim());
    let mut z_nuclear = T::zero();
    let mut residual = T::infinity();
    for _iter in 0..cfg.max_admm_iters {
        let c = Zip::from(&st.g1)
            .and(&st.g2)
            .and(&st.h1)
            .and(&st.h2)
            .map_collect(|&g1, &g2, &h1, &h2| (g1 + g2) / two + (h1 + h2) / (two * u));
        let (znew, shrunk) = svt_arr(&c, w / (two * u))?;
        z = znew;
        z_nuclear = shrunk.iter().fold(T::zero(), |a, &b| a + b);

        let g1_new = center_arr(&Zip::from(&z).and(&st.h1).map_collect(|&zv, &h1| zv - h1 / u));
        let g2_new = clip_arr(
            &Zip::from(t)
                .and(&z)
                .and(&st.h2)
                .map_collect(|&tv, &zv, &h2| (tv + u * zv - h2) / (T::one() + u)),
            -alpha2,
            alpha2,
        );

        let r1 = frob_diff(&z, &g1_new);
        let r2 = frob_diff(&z, &g2_new);
        let s1 = u * frob_diff(&g1_new, &st.g1);
        let s2 = u * frob_diff(&g2_new, &st.g2);

        Zip::from(&mut st.h1)
            .and(&z)
            .and(&g1_new)
            .for_each(|h, &zv, &g| *h = *h - u * (zv - g));
        Zip::from(&mut st.h2)
            .and(&z)
            .and(&g2_new)
            .for_each(|h, &zv, &g| *h = *h - u * (zv - g));
        st.g1 = g1_new;
        st.g2 = g2_new;

        residual = r1.max(r2).max(s1).max(s2) / T::one().max(frob(&z));
        if residual <= cfg.admm_tol {
            return Ok((z, z_nuclear));
        }
    }
    Err(Error::IterationCap {
        solver: "admm_prox_z",
        iterations: cfg.max_admm_iters,
        residual: to_f64(residual),
        last: Some(Box::new(PartialIterate {
            n_rows: z.nrows(),
            n_cols: z.ncols(),
            values: z.iter().map(|&v| to_f64(v)).collect(),
            mu: None,
            objective: to_f64(
                cast::<T>(0.5) * frob_diff(&z, t).powi(2) + w * z_nuclear,
            ),
        })),
    })
}

/// Proximal step of the unconstrained-fit Z-subproblem: the minimizer of
/// `½‖Z − T‖_F² + w‖Z‖_*` over `{‖Z‖_∞ ≤ α2, 1ᵀZ1 = 0}`.
pub fn admm_prox_z<T: Real>(
    t: &DenseMatrix<T>,
    w: T,
    alpha2: T,
    cfg: &SolverConfig<T>,
) -> Result<DenseMatrix<T>> {
    if w < T::zero() {
        return Err(Error::invalid("nuclear weight must be nonnegative"));
    }
    if alpha2 < T::zero() {
        return Err(Error::invalid("box bound must be nonnegative"));
    }
    cfg.validate()?;
    let mut state = None;
    let (z, _) = admm_prox_z_warm(t.array(), w, alpha2, cfg, &mut state)?;
    Ok(DenseMatrix::from_array_unchecked(z))
}

// ---------------------------------------------------------------------------
// Accelerated proximal gradient engine
// ---------------------------------------------------------------------------

struct MleProblem<'a, T: Real> {
    w: &'a Array2<T>,
    link: Link,
    lambda: T,
    alpha1: T,
    box_bound: T,
    mean_zero: bool,
    update_mu: bool,
}

enum ProxState<T: Real> {
    ThreeBlock(Option<AdmmState<T>>),
    TwoBlock(Option<crate::completion::BoxAdmmState<T>>),
}

impl<'a, T: Real> MleProblem<'a, T> {
    fn neg_loglik(&self, mu: T, z: &Array2<T>) -> T {
        let m = z.mapv(|v| v + mu);
        -log_likelihood_arr(self.w, &m, self.link)
    }

    fn objective(&self, mu: T, z: &Array2<T>, z_nuclear: T) -> T {
        self.neg_loglik(mu, z) + self.lambda * z_nuclear
    }

    fn prox(
        &self,
        t: &Array2<T>,
        weight: T,
        cfg: &SolverConfig<T>,
        state: &mut ProxState<T>,
    ) -> Result<(Array2<T>, T)> {
        match state {
            ProxState::ThreeBlock(s) => admm_prox_z_warm(t, weight, self.box_bound, cfg, s),
            ProxState::TwoBlock(s) => prox_nuclear_box_warm(t, weight, self.box_bound, cfg, s),
        }
    }

    /// Exact feasibility cleanup applied to the final iterate. Clip → center
    /// → clip keeps the box exact while driving the grand mean far below the
    /// `1e-6·n1·n2` contract.
    fn project_feasible(&self, z: Array2<T>) -> Array2<T> {
        let clipped = clip_arr(&z, -self.box_bound, self.box_bound);
        if self.mean_zero {
            clip_arr(&center_arr(&clipped), -self.box_bound, self.box_bound)
        } else {
            clipped
        }
    }
}

fn solve_mle<T: Real>(
    prob: &MleProblem<'_, T>,
    mu0: T,
    z0: Array2<T>,
    cfg: &SolverConfig<T>,
) -> Result<(ThetaFit<T>, Array2<T>)> {
    cfg.validate()?;
    let (n1, n2) = (prob.w.nrows(), prob.w.ncols());
    let n_total: T = cast((n1 * n2) as f64);

    let mut prox_state = if prob.mean_zero {
        ProxState::ThreeBlock(None)
    } else {
        ProxState::TwoBlock(None)
    };

    let z0_nuclear = if z0.iter().all(|&v| v == T::zero()) {
        T::zero()
    } else {
        singular_values_arr(&z0)?
            .iter()
            .fold(T::zero(), |a, &b| a + b)
    };

    let mut mu = mu0;
    let mut z = z0;
    let mut z_nuc = z0_nuclear;
    let mut obj = prob.objective(mu, &z, z_nuc);

    let mut mu_prev = mu;
    let mut z_prev = z.clone();
    let mut t_mom = T::one();
    let mut momentum_on = false;

    let mut big_l = cfg.l0;
    let mut trace = vec![obj];
    let mut accepted = 0usize;
    let mut rel_change = T::infinity();

    for _outer in 0..cfg.max_outer_iters {
        // Extrapolated point.
        let (mu_y, z_y);
        if momentum_on {
            let t_next = (T::one() + (T::one() + cast::<T>(4.0) * t_mom * t_mom).sqrt())
                / cast::<T>(2.0);
            let omega = (t_mom - T::one()) / t_next;
            mu_y = mu + omega * (mu - mu_prev);
            z_y = Zip::from(&z)
                .and(&z_prev)
                .map_collect(|&a, &b| a + omega * (a - b));
            t_mom = t_next;
        } else {
            mu_y = mu;
            z_y = z.clone();
            t_mom = T::one();
        }

        // Gradient of ℓ at the extrapolated point.
        let m_y = z_y.mapv(|v| v + mu_y);
        let ell_y = log_likelihood_arr(prob.w, &m_y, prob.link);
        let g = grad_arr(prob.w, &m_y, prob.link);
        let sum_g = g.sum();

        // Backtracking on L.
        let (mu_c, z_c, nuc_c, ell_c) = loop {
            let mu_c = if prob.update_mu {
                (mu_y + sum_g / (big_l * n_total))
                    .min(prob.alpha1)
                    .max(-prob.alpha1)
            } else {
                mu_y
            };
            let t_mat = Zip::from(&z_y).and(&g).map_collect(|&zv, &gv| zv + gv / big_l);
            let (z_c, nuc_c) = prob.prox(&t_mat, prob.lambda / big_l, cfg, &mut prox_state)?;

            let m_c = z_c.mapv(|v| v + mu_c);
            let ell_c = log_likelihood_arr(prob.w, &m_c, prob.link);

            let dmu = mu_c - mu_y;
            let dz_ip = Zip::from(&z_c)
                .and(&z_y)
                .and(&g)
                .fold(T::zero(), |acc, &a, &b, &gv| acc + (a - b) * gv);
            let dz_sq = frob_diff(&z_c, &z_y).powi(2);
            let quad = -ell_y - dmu * sum_g + big_l * n_total / cast::<T>(2.0) * dmu * dmu
                - dz_ip
                + big_l / cast::<T>(2.0) * dz_sq;

            let slack = cast::<T>(1e-10) * T::one().max(quad.abs());
            if -ell_c <= quad + slack {
                break (mu_c, z_c, nuc_c, ell_c);
            }
            big_l = big_l * cfg.backtrack_factor;
            if big_l > cast(1e18) {
                return Err(Error::invalid(
                    "backtracking failed to find a majorizing step size",
                ));
            }
        };

        let obj_c = -ell_c + prob.lambda * nuc_c;
        let monotone_slack = cast::<T>(1e-12) * T::one().max(obj.abs());
        if obj_c > obj + monotone_slack {
            if momentum_on {
                // Extrapolation overshot: restart from the last accepted
                // iterate. The plain proximal step on the next pass is
                // guaranteed to descend once the majorization holds.
                momentum_on = false;
                continue;
            }
            // A plain step cannot ascend beyond rounding noise; treat as
            // converged.
            rel_change = T::zero();
            break;
        }

        mu_prev = mu;
        z_prev = z;
        mu = mu_c;
        z = z_c;
        z_nuc = nuc_c;
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

    if rel_change >= cfg.outer_tol {
        return Err(Error::IterationCap {
            solver: "penalized_mle",
            iterations: cfg.max_outer_iters,
            residual: to_f64(rel_change),
            last: Some(Box::new(PartialIterate {
                n_rows: z.nrows(),
                n_cols: z.ncols(),
                values: z.iter().map(|&v| to_f64(v)).collect(),
                mu: Some(to_f64(mu)),
                objective: to_f64(obj),
            })),
        });
    }

    let z_final = prob.project_feasible(z);
    let fit = ThetaFit {
        decomposition: PredictorDecomposition {
            mu,
            z: DenseMatrix::from_array_unchecked(z_final.clone()),
        },
        objective: obj,
        iterations: accepted,
        objective_trace: trace,
        lambda: prob.lambda,
    };
    Ok((fit, z_final))
}

fn validate_mask<T: Real>(w: &DenseMatrix<T>) -> Result<()> {
    if !w.is_binary() {
        return Err(Error::invalid("mask matrix must be 0/1-valued"));
    }
    Ok(())
}

/// Penalized maximum likelihood for `(μ, Z)`:
/// maximize `ℓ_W(μJ + Z) − λ‖Z‖_*` over
/// `{|μ| ≤ α1, ‖Z‖_∞ ≤ α2, 1ᵀZ1 = 0}`.
///
/// Accelerated proximal gradient with backtracking on the majorization
/// constant and momentum restart on objective increase, so the accepted
/// objective sequence is nonincreasing. Initialization follows the
/// uniform-missingness special case: `μ0 = f⁻¹(mean(W))` clipped to
/// `±α1`, `Z0 = 0`.
pub fn fit_unconstrained<T: Real>(
    w: &DenseMatrix<T>,
    link: Link,
    alpha1: T,
    alpha2: T,
    lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<ThetaFit<T>> {
    let rate = w.mean();
    let lo: T = cast(EPS_PROB);
    let mu0 = link
        .inverse(rate.min(T::one() - lo).max(lo))
        .min(alpha1)
        .max(-alpha1);
    let z0 = Array2::zeros(w.array().raw_dim());
    fit_unconstrained_from(w, link, alpha1, alpha2, lambda, cfg, mu0, &DenseMatrix::from_array_unchecked(z0))
}

/// [`fit_unconstrained`] from an explicit starting point. The default
/// initialization is almost always preferable; this entry point exists so
/// solver runs from different starts can be compared.
#[allow(clippy::too_many_arguments)]
pub fn fit_unconstrained_from<T: Real>(
    w: &DenseMatrix<T>,
    link: Link,
    alpha1: T,
    alpha2: T,
    lambda: T,
    cfg: &SolverConfig<T>,
    mu0: T,
    z0: &DenseMatrix<T>,
) -> Result<ThetaFit<T>> {
    validate_mask(w)?;
    if alpha1 <= T::zero() || alpha2 <= T::zero() {
        return Err(Error::invalid("alpha1 and alpha2 must be positive"));
    }
    if lambda < T::zero() {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    w.check_same_shape(z0, "fit_unconstrained initialization")?;
    let prob = MleProblem {
        w: w.array(),
        link,
        lambda,
        alpha1,
        box_bound: alpha2,
        mean_zero: true,
        update_mu: true,
    };
    let (fit, _) = solve_mle(&prob, mu0.min(alpha1).max(-alpha1), z0.array().clone(), cfg)?;
    Ok(fit)
}

/// Re-estimation of `Z` under the tighter box `‖Z‖_∞ ≤ β` with `μ`
/// frozen at `mu_hat` and no mean-zero constraint. Warm-started from
/// `winsorize(z_init, β)` when an initial `Z` is supplied.
pub fn refit_constrained<T: Real>(
    w: &DenseMatrix<T>,
    link: Link,
    mu_hat: T,
    beta: T,
    lambda: T,
    cfg: &SolverConfig<T>,
    z_init: Option<&DenseMatrix<T>>,
) -> Result<ThetaFit<T>> {
    validate_mask(w)?;
    if beta < T::zero() {
        return Err(Error::invalid("beta must be nonnegative"));
    }
    if lambda < T::zero() {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    let (n1, n2) = w.shape();
    if beta == T::zero() {
        // Degenerate box: Ẑ_β = 0 and the fit is the constant predictor.
        let z = DenseMatrix::zeros(n1, n2);
        let m = DenseMatrix::constant(n1, n2, mu_hat);
        let obj = -log_likelihood_arr(w.array(), m.array(), link);
        return Ok(ThetaFit {
            decomposition: PredictorDecomposition { mu: mu_hat, z },
            objective: obj,
            iterations: 0,
            objective_trace: vec![obj],
            lambda,
        });
    }
    let z0 = match z_init {
        Some(z) => {
            w.check_same_shape(z, "refit_constrained initialization")?;
            clip_arr(z.array(), -beta, beta)
        }
        None => Array2::zeros(w.array().raw_dim()),
    };
    let prob = MleProblem {
        w: w.array(),
        link,
        lambda,
        alpha1: T::zero(),
        box_bound: beta,
        mean_zero: false,
        update_mu: false,
    };
    let (fit, _) = solve_mle(&prob, mu_hat, z0, cfg)?;
    Ok(fit)
}

/// Ablation without the offset split: `μ` fixed at zero and the whole
/// predictor penalized under `‖M‖_∞ ≤ alpha`, with no mean-zero
/// constraint.
pub fn fit_one_bit<T: Real>(
    w: &DenseMatrix<T>,
    link: Link,
    alpha: T,
    lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<ThetaFit<T>> {
    validate_mask(w)?;
    if alpha <= T::zero() {
        return Err(Error::invalid("alpha must be positive"));
    }
    let prob = MleProblem {
        w: w.array(),
        link,
        lambda,
        alpha1: T::zero(),
        box_bound: alpha,
        mean_zero: false,
        update_mu: false,
    };
    let z0 = Array2::zeros(w.array().raw_dim());
    let (fit, _) = solve_mle(&prob, T::zero(), z0, cfg)?;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{linalg::mean_center, Mat};
    use approx::assert_abs_diff_eq;

    #[test]
    fn winsorize_examples() {
        let z = Mat::new(2, 2, vec![2.0, -3.0, 0.5, 1.0]).unwrap();
        let out = winsorize(&z, 1.0).unwrap();
        assert_eq!(out.values(), &[1.0, -1.0, 0.5, 1.0]);

        let zero = winsorize(&z, 0.0).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let small = Mat::new(1, 2, vec![0.3, -0.2]).unwrap();
        assert_eq!(winsorize(&small, 1.0).unwrap(), small);

        // Idempotence.
        assert_eq!(winsorize(&out, 1.0).unwrap(), out);
    }

    #[test]
    fn beta_quantile_examples() {
        let z = Mat::new(10, 10, (1..=100).map(|v| v as f64).collect()).unwrap();
        let beta = beta_from_fraction(&z, 0.05).unwrap();
        assert_abs_diff_eq!(beta, 95.05, epsilon = 1e-12);
        let exceed = z.values().iter().filter(|&&v| v.abs() > beta).count();
        assert_eq!(exceed, 5);

        assert_abs_diff_eq!(beta_from_fraction(&z, 0.0).unwrap(), 100.0, epsilon = 1e-12);

        let flat = Mat::constant(3, 3, -2.0);
        for t in [0.0, 0.3, 0.9] {
            assert_abs_diff_eq!(beta_from_fraction(&flat, t).unwrap(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn theta_from_examples() {
        let z = Mat::zeros(2, 2);
        let est = theta_from(0.0, &z, Link::Logistic, Provenance::Unconstrained, None);
        for &v in est.theta.values() {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        }

        let est = theta_from(-4.0f64.ln(), &z, Link::Logistic, Provenance::Unconstrained, None);
        for &v in est.theta.values() {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
        }

        // Monotone in the predictor.
        let z = Mat::new(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        let est = theta_from(0.3, &z, Link::Probit, Provenance::Unconstrained, None);
        assert!(est.theta.get(0, 0) < est.theta.get(0, 1));
        assert!(est.theta.get(0, 1) < est.theta.get(0, 2));
    }

    #[test]
    fn admm_prox_pure_projection_case() {
        // w = 0 and the centered target inside the box: the prox is exactly
        // the mean-centering projection.
        let t = Mat::new(2, 3, vec![0.5, -0.2, 0.1, 0.4, -0.3, 0.2]).unwrap();
        let cfg = SolverConfig::<f64> {
            admm_tol: 1e-12,
            ..Default::default()
        };
        let out = admm_prox_z(&t, 0.0, 10.0, &cfg).unwrap();
        let expect = mean_center(&t);
        assert!(out.sub(&expect).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn admm_prox_zero_target() {
        let t = Mat::zeros(3, 3);
        let out = admm_prox_z(&t, 0.5, 1.0, &SolverConfig::default()).unwrap();
        assert!(out.max_abs() < 1e-10);
    }

    #[test]
    fn admm_prox_respects_constraints() {
        let t = Mat::from_shape_fn(5, 5, |(i, j)| ((i * 5 + j) as f64 * 0.7).sin() * 2.0);
        let cfg = SolverConfig::<f64>::default();
        let out = admm_prox_z(&t, 0.3, 1.0, &cfg).unwrap();
        assert!(out.max_abs() <= 1.0 + 1e-6);
        assert!(out.sum().abs() <= 1e-6 * 25.0);
    }

    fn checkerboard(n: usize) -> Mat {
        Mat::from_shape_fn(n, n, |(i, j)| ((i + j) % 2) as f64)
    }

    #[test]
    fn fit_all_ones_pushes_mu_to_bound() {
        let w = Mat::constant(6, 6, 1.0);
        let fit = fit_unconstrained(&w, Link::Logistic, 2.0, 2.0, 50.0, &SolverConfig::default())
            .unwrap();
        assert_abs_diff_eq!(fit.decomposition.mu, 2.0, epsilon = 1e-12);
        assert!(fit.decomposition.z.max_abs() < 1e-6);
    }

    #[test]
    fn fit_inherits_mask_symmetry() {
        // Rows 0 and 1 of W identical: the optimum, being unique, must have
        // identical Z rows too.
        let mut vals = vec![0.0; 36];
        for j in 0..6 {
            let v = ((j * 3) % 2) as f64;
            vals[j] = v;
            vals[6 + j] = v;
        }
        for (k, item) in vals.iter_mut().enumerate().skip(12) {
            *item = ((k * 7) % 3 == 0) as u8 as f64;
        }
        let w = Mat::new(6, 6, vals).unwrap();
        let cfg = SolverConfig {
            outer_tol: 1e-10,
            ..Default::default()
        };
        let fit = fit_unconstrained(&w, Link::Logistic, 3.0, 3.0, 1.0, &cfg).unwrap();
        let z = &fit.decomposition.z;
        for j in 0..6 {
            assert_abs_diff_eq!(z.get(0, j), z.get(1, j), epsilon = 1e-6);
        }
    }

    #[test]
    fn fit_objective_trace_is_monotone() {
        let w = checkerboard(8);
        let fit = fit_unconstrained(&w, Link::Logistic, 2.0, 2.0, 0.7, &SolverConfig::default())
            .unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0),
                "objective increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn refit_zero_beta_gives_constant_theta() {
        let w = checkerboard(5);
        let fit = refit_constrained(&w, Link::Logistic, -0.4, 0.0, 1.0, &SolverConfig::default(), None)
            .unwrap();
        assert_eq!(fit.decomposition.z.max_abs(), 0.0);
        let est = theta_from(
            fit.decomposition.mu,
            &fit.decomposition.z,
            Link::Logistic,
            Provenance::RefitBeta,
            Some(0.0),
        );
        let expect = Link::Logistic.value(-0.4);
        for &v in est.theta.values() {
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn refit_with_larger_box_does_at_least_as_well() {
        // With β ≥ α2 and the same λ the refit optimizes over a superset of
        // the mean-zero feasible set, so its optimum cannot be worse.
        let w = checkerboard(6);
        let cfg = SolverConfig {
            outer_tol: 1e-9,
            ..Default::default()
        };
        let base = fit_unconstrained(&w, Link::Logistic, 2.0, 1.0, 0.5, &cfg).unwrap();
        let refit = refit_constrained(
            &w,
            Link::Logistic,
            base.decomposition.mu,
            1.5,
            0.5,
            &cfg,
            Some(&base.decomposition.z),
        )
        .unwrap();
        assert!(refit.objective <= base.objective + 1e-6);
    }

    #[test]
    fn one_bit_fit_runs_without_offset() {
        let w = checkerboard(6);
        let fit = fit_one_bit(&w, Link::Logistic, 2.0, 0.5, &SolverConfig::default()).unwrap();
        assert_eq!(fit.decomposition.mu, 0.0);
        assert!(fit.decomposition.z.max_abs() <= 2.0 + 1e-9);
    }

    #[test]
    fn rejects_fractional_mask() {
        let w = Mat::constant(2, 2, 0.5);
        assert!(fit_unconstrained(&w, Link::Logistic, 1.0, 1.0, 0.1, &SolverConfig::default())
            .is_err());
    }
}
