//! Recovery of a low-rank matrix from noisily observed entries whose
//! missingness is itself governed by a hidden low-rank factor model.
//!
//! The pipeline has two stages:
//!
//! 1. **Observation probabilities.** The indicator matrix `W` of observed
//!    entries is modeled as independent Bernoulli draws with success
//!    probabilities `θ_ij = f(μ + z_ij)`, where `f` is a logistic or probit
//!    inverse link, `μ` is a scalar offset and `Z` is low rank. The pair
//!    `(μ, Z)` is estimated by nuclear-norm-penalized maximum likelihood
//!    solved with an accelerated proximal gradient loop whose inner proximal
//!    step is an ADMM splitting (see [`theta`]).
//! 2. **Completion.** The target matrix is recovered by minimizing an
//!    inverse-probability-weighted least-squares risk plus a nuclear-norm
//!    penalty under a max-norm box (see [`completion`]).
//!
//! Supporting modules provide tuning ([`tuning`]: AIC over λ, weighted
//! k-fold cross-validation over τ), comparison estimators and evaluation
//! metrics ([`baselines`], [`metrics`]), synthetic data generation
//! ([`sim`]), matrix file formats ([`io`]) and a replication driver
//! ([`experiment`]).
//!
//! All numeric code is generic over the scalar type through the [`Real`]
//! trait (`f32` or `f64`); the crate-root aliases ([`Mat`], [`Mat32`])
//! pin the common concrete choices.

pub mod baselines;
pub mod completion;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod link;
pub mod matrix;
pub mod metrics;
pub mod real;
pub mod sim;
pub mod theta;
pub mod tuning;

pub use completion::{fit_completion, prox_nuclear_box, weighted_risk, CompletionResult};
pub use error::{Error, Result};
pub use linalg::{clip_entries, mean_center, norms, svd, svt, NormReport, SvdResult};
pub use link::{grad_m, grad_mu, log_likelihood, Link};
pub use matrix::DenseMatrix;
pub use metrics::{hellinger_sq, numerical_rank, rmse, rmspe, test_error, HellingerNorm, MetricReport};
pub use real::Real;
pub use sim::{gen_noise_and_observe, gen_target, gen_theta, SimulationSpec};
pub use theta::{
    admm_prox_z, beta_from_fraction, fit_one_bit, fit_unconstrained, fit_unconstrained_from,
    refit_constrained, theta_from, winsorize, PredictorDecomposition, Provenance, SolverConfig,
    ThetaEstimate, ThetaFit,
};
pub use tuning::{cv_folds, select_lambda_aic, select_tau_cv, GridSearchReport};

/// Probability floor/ceiling guard: estimated probabilities are clamped to
/// `[EPS_PROB, 1 - EPS_PROB]` so logs and inverse weights stay finite.
pub const EPS_PROB: f64 = 1e-15;

/// Double-precision dense matrix, the default carrier throughout.
pub type Mat = DenseMatrix<f64>;
/// Single-precision dense matrix.
pub type Mat32 = DenseMatrix<f32>;
