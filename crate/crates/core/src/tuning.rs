//! Tuning-parameter selection: AIC over the nuclear penalty of the
//! probability fit, weighted k-fold cross-validation over the completion
//! penalty.

use crate::completion::fit_completion;
use crate::error::{Error, Result};
use crate::linalg::singular_values_arr;
use crate::link::{log_likelihood_arr, Link};
use crate::matrix::DenseMatrix;
use crate::metrics::numerical_rank;
use crate::real::{cast, to_f64, Real};
use crate::theta::{fit_unconstrained, SolverConfig, ThetaEstimate, ThetaFit};
use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Result of a one-dimensional grid search.
///
/// Failed grid points keep a `+∞` score and are listed in `failed`;
/// `chosen` attains the minimum finite score, ties broken toward the
/// smaller grid value (first occurrence among duplicates).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridSearchReport {
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub chosen: f64,
    pub per_fold_scores: Option<Vec<Vec<f64>>>,
    pub failed: Vec<usize>,
}

fn choose_minimum(grid: &[f64], scores: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (&g, &s)) in grid.iter().zip(scores).enumerate() {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                if s < scores[j] || (s == scores[j] && g < grid[j]) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best.ok_or_else(|| Error::invalid("every grid point failed"))
}

/// Default λ grid: 10 logarithmic points spanning
/// `[1e-2, 1e2] · √max(n1, n2)`.
pub fn default_lambda_grid(n1: usize, n2: usize) -> Vec<f64> {
    let scale = (n1.max(n2) as f64).sqrt();
    log_grid(1e-2 * scale, 1e2 * scale, 10)
}

/// Default τ grid: 10 logarithmic points spanning `[1e-5, 1] · τ₀` where
/// `τ₀ = (2/(n1 n2)) · σ₁(W∘Θ†∘Y)` is the smallest penalty that keeps the
/// zero matrix optimal.
pub fn default_tau_grid<T: Real>(
    y: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    theta: &ThetaEstimate<T>,
) -> Result<Vec<f64>> {
    let anchor = zero_solution_tau(y, w, theta)?;
    Ok(log_grid(1e-5 * anchor, anchor, 10))
}

/// The crossover penalty `(2/(n1 n2)) · σ₁(W∘Θ†∘Y)` above which the
/// completion solution collapses to zero.
pub fn zero_solution_tau<T: Real>(
    y: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    theta: &ThetaEstimate<T>,
) -> Result<f64> {
    y.check_same_shape(w, "zero_solution_tau")?;
    let weighted = Zip::from(y.array())
        .and(w.array())
        .and(theta.theta.array())
        .map_collect(|&yv, &wv, &tv| wv / tv * yv);
    let s = singular_values_arr(&weighted)?;
    let sigma1 = s.first().copied().unwrap_or_else(T::zero);
    Ok(2.0 / (y.len() as f64) * to_f64(sigma1))
}

/// Logarithmically spaced grid with `n` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

/// AIC selection of the nuclear penalty λ for the probability fit.
///
/// For each grid value the penalized MLE is solved and scored with
/// `AIC(λ) = −2·ℓ_W(M̂) + 2·r(n1+n2−r)` where `r` is the numerical rank
/// of `M̂` at threshold `1e-8·σ₁`. Returns the report and the winning fit.
pub fn select_lambda_aic_with_fit<T: Real>(
    w: &DenseMatrix<T>,
    link: Link,
    alpha1: T,
    alpha2: T,
    grid: &[f64],
    cfg: &SolverConfig<T>,
) -> Result<(GridSearchReport, ThetaFit<T>)> {
    if grid.is_empty() || grid.iter().any(|&g| g <= 0.0) {
        return Err(Error::invalid("lambda grid must be nonempty and positive"));
    }
    let (n1, n2) = w.shape();
    let mut scores = Vec::with_capacity(grid.len());
    let mut failed = Vec::new();
    let mut fits: Vec<Option<ThetaFit<T>>> = Vec::with_capacity(grid.len());
    for (i, &lambda) in grid.iter().enumerate() {
        match fit_unconstrained(w, link, alpha1, alpha2, cast(lambda), cfg) {
            Ok(fit) => {
                let m_hat = fit.decomposition.predictor();
                let ell = to_f64(log_likelihood_arr(w.array(), m_hat.array(), link));
                let r = numerical_rank(&m_hat, 1e-8)?;
                let df = (r * (n1 + n2 - r)) as f64;
                scores.push(-2.0 * ell + 2.0 * df);
                fits.push(Some(fit));
            }
            Err(_) => {
                scores.push(f64::INFINITY);
                failed.push(i);
                fits.push(None);
            }
        }
    }
    let best = choose_minimum(grid, &scores)?;
    let fit = fits.swap_remove(best).expect("finite score has a fit");
    Ok((
        GridSearchReport {
            grid: grid.to_vec(),
            scores,
            chosen: grid[best],
            per_fold_scores: None,
            failed,
        },
        fit,
    ))
}

/// AIC selection of λ; see [`select_lambda_aic_with_fit`].
pub fn select_lambda_aic<T: Real>(
    w: &DenseMatrix<T>,
    link: Link,
    alpha1: T,
    alpha2: T,
    grid: &[f64],
    cfg: &SolverConfig<T>,
) -> Result<GridSearchReport> {
    select_lambda_aic_with_fit(w, link, alpha1, alpha2, grid, cfg).map(|(r, _)| r)
}

/// Seeded partition of the observed entries into `k` folds.
///
/// Observed coordinates are listed in row-major order, shuffled with a
/// ChaCha20 generator seeded from `seed`, and dealt round-robin, so every
/// observed entry lands in exactly one fold and fold sizes differ by at
/// most one.
pub fn cv_folds<T: Real>(
    w: &DenseMatrix<T>,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut observed = Vec::new();
    for i in 0..w.n_rows() {
        for j in 0..w.n_cols() {
            if w.get(i, j) == T::one() {
                observed.push((i, j));
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    observed.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (pos, coord) in observed.into_iter().enumerate() {
        folds[pos % k].push(coord);
    }
    for (f, fold) in folds.iter().enumerate() {
        if fold.is_empty() {
            return Err(Error::EmptyFold { fold: f });
        }
    }
    Ok(folds)
}

/// Weighted k-fold cross-validation of the completion penalty τ.
///
/// Observed entries are partitioned by [`cv_folds`]; for each fold the
/// completion is fit on the remaining entries and scored with the
/// self-normalized inverse-probability-weighted validation error
/// `Σ θ̂⁻¹(â−y)² / Σ θ̂⁻¹` over the held-out entries. Scores are averaged
/// over folds and the minimizer chosen (ties toward the smaller value).
#[allow(clippy::too_many_arguments)]
pub fn select_tau_cv<T: Real>(
    y: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    theta: &ThetaEstimate<T>,
    grid: &[f64],
    k: usize,
    seed: u64,
    a_bound: T,
    cfg: &SolverConfig<T>,
) -> Result<GridSearchReport> {
    if grid.is_empty() || grid.iter().any(|&g| g < 0.0) {
        return Err(Error::invalid("tau grid must be nonempty and nonnegative"));
    }
    let folds = cv_folds(w, k, seed)?;
    let mut per_fold = vec![vec![f64::INFINITY; grid.len()]; k];
    let mut failed = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        // Mask with this fold's entries held out.
        let mut w_train = w.array().clone();
        for &(i, j) in fold {
            w_train[(i, j)] = T::zero();
        }
        let w_train = DenseMatrix::from_array_unchecked(w_train);
        for (g, &tau) in grid.iter().enumerate() {
            if failed.contains(&g) {
                continue;
            }
            match fit_completion(y, &w_train, theta, cast(tau), a_bound, cfg) {
                Ok(fit) => {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for &(i, j) in fold {
                        let inv = 1.0 / to_f64(theta.theta.get(i, j));
                        let d = to_f64(fit.a_hat.get(i, j)) - to_f64(y.get(i, j));
                        num += inv * d * d;
                        den += inv;
                    }
                    per_fold[f][g] = num / den;
                }
                Err(_) => {
                    failed.push(g);
                }
            }
        }
    }
    let scores: Vec<f64> = (0..grid.len())
        .map(|g| {
            if failed.contains(&g) {
                f64::INFINITY
            } else {
                per_fold.iter().map(|row| row[g]).sum::<f64>() / k as f64
            }
        })
        .collect();
    let best = choose_minimum(grid, &scores)?;
    failed.sort_unstable();
    failed.dedup();
    Ok(GridSearchReport {
        grid: grid.to_vec(),
        scores,
        chosen: grid[best],
        per_fold_scores: Some(per_fold),
        failed,
    })
}
