//! Replication driver: generate data, run the configured estimators over
//! seeded replicates, evaluate against the ground truth and aggregate.
//!
//! One setting keeps `Θ⋆` and `A⋆` fixed (they depend only on the setting
//! seed); each replicate redraws the noise and the observation mask. Grid
//! selection (AIC for λ, weighted CV for τ) can run once on replicate 0
//! and be reused, or per replicate.

use crate::baselines::{nw_estimator, uniform_estimator};
use crate::completion::{default_a_bound, fit_completion};
use crate::error::{Error, Result};
use crate::link::Link;
use crate::metrics::{hellinger_sq, numerical_rank, rmse, test_error, HellingerNorm};
use crate::sim::{gen_noise_and_observe, gen_target, gen_theta, SimulationSpec, ThetaTruth};
use crate::theta::{
    beta_from_fraction, fit_unconstrained, refit_constrained, theta_from, winsorize, Provenance,
    SolverConfig, ThetaEstimate, ThetaFit,
};
use crate::tuning::{select_lambda_aic_with_fit, select_tau_cv};
use crate::{linalg, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Which probability estimate an estimator/arm uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Unconstrained penalized MLE.
    Alpha,
    /// Constrained re-estimation at the β矛 chosen so this fraction of the
    /// unconstrained `Ẑ` is clipped.
    Beta(f64),
    /// Direct winsorization at the same β.
    Win(f64),
    /// Rank-1 marginal-rate estimator.
    Nw,
    /// Constant observed-fraction estimator.
    Uni,
    /// True simulation probabilities.
    Known,
}

impl EstimatorKind {
    /// Stable name used as a report key (`beta@0.1`, `win@0.05`, ...).
    pub fn name(&self) -> String {
        match self {
            EstimatorKind::Alpha => "alpha".into(),
            EstimatorKind::Beta(t) => format!("beta@{t}"),
            EstimatorKind::Win(t) => format!("win@{t}"),
            EstimatorKind::Nw => "nw".into(),
            EstimatorKind::Uni => "uni".into(),
            EstimatorKind::Known => "known".into(),
        }
    }

    /// Parse a report key back into the estimator kind.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(t) = s.strip_prefix("beta@") {
            return Ok(EstimatorKind::Beta(t.parse().map_err(|_| {
                Error::invalid(format!("bad estimator fraction in {s:?}"))
            })?));
        }
        if let Some(t) = s.strip_prefix("win@") {
            return Ok(EstimatorKind::Win(t.parse().map_err(|_| {
                Error::invalid(format!("bad estimator fraction in {s:?}"))
            })?));
        }
        match s {
            "alpha" => Ok(EstimatorKind::Alpha),
            "nw" => Ok(EstimatorKind::Nw),
            "uni" => Ok(EstimatorKind::Uni),
            "known" => Ok(EstimatorKind::Known),
            other => Err(Error::invalid(format!("unknown estimator {other:?}"))),
        }
    }
}

/// How λ is chosen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LambdaChoice {
    Fixed(f64),
    /// AIC over a grid, run once on replicate 0 or per replicate.
    AicGrid { grid: Vec<f64>, per_replicate: bool },
}

/// How τ is chosen (shared policy across completion arms; the selected
/// value is per arm).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TauChoice {
    Fixed(f64),
    /// Weighted k-fold CV over a grid, once on replicate 0 or per replicate.
    CvGrid { grid: Vec<f64>, per_replicate: bool },
}

/// Plain-scalar mirror of [`SolverConfig`] so configurations serialize.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSettings {
    pub l0: f64,
    pub backtrack_factor: f64,
    pub max_outer_iters: usize,
    pub max_admm_iters: usize,
    pub outer_tol: f64,
    pub admm_tol: f64,
    pub u: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let c = SolverConfig::<f64>::default();
        SolverSettings {
            l0: c.l0,
            backtrack_factor: c.backtrack_factor,
            max_outer_iters: c.max_outer_iters,
            max_admm_iters: c.max_admm_iters,
            outer_tol: c.outer_tol,
            admm_tol: c.admm_tol,
            u: c.u,
        }
    }
}

impl SolverSettings {
    pub fn to_config(self) -> SolverConfig<f64> {
        SolverConfig {
            l0: self.l0,
            backtrack_factor: self.backtrack_factor,
            max_outer_iters: self.max_outer_iters,
            max_admm_iters: self.max_admm_iters,
            outer_tol: self.outer_tol,
            admm_tol: self.admm_tol,
            u: self.u,
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimulationSpec,
    pub replicates: usize,
    /// Box bounds for the probability fit: explicit values, or derived from
    /// the true decomposition scaled by `alpha_margin`.
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha_margin: f64,
    pub lambda: LambdaChoice,
    /// Probability estimators to evaluate against `Θ⋆`.
    pub theta_estimators: Vec<EstimatorKind>,
    /// Probability estimators feeding a completion arm.
    pub completion_arms: Vec<EstimatorKind>,
    pub tau: TauChoice,
    pub cv_folds: usize,
    /// Fold seed; derived from the setting seed when absent.
    pub cv_seed: Option<u64>,
    /// Completion box bound; `1.2 × max observed |y|` when absent.
    pub a_bound: Option<f64>,
    pub solver: SolverSettings,
    /// Starting majorization constant for the completion solver; a
    /// weight-curvature heuristic when absent.
    pub completion_l0: Option<f64>,
    /// Run replicates on the rayon pool.
    pub parallel: bool,
    /// Progress lines on stderr.
    pub verbose: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sim: SimulationSpec::default(),
            replicates: 20,
            alpha1: None,
            alpha2: None,
            alpha_margin: 1.0,
            lambda: LambdaChoice::Fixed(10.0),
            theta_estimators: vec![EstimatorKind::Alpha, EstimatorKind::Nw, EstimatorKind::Uni],
            completion_arms: vec![],
            tau: TauChoice::Fixed(1e-3),
            cv_folds: 5,
            cv_seed: None,
            a_bound: None,
            solver: SolverSettings::default(),
            completion_l0: None,
            parallel: true,
            verbose: false,
        }
    }
}

impl ExperimentConfig {
    fn derived_cv_seed(&self) -> u64 {
        self.cv_seed
            .unwrap_or_else(|| self.sim.seed ^ 0x9E37_79B9_7F4A_7C15)
    }
}

/// Per-replicate probability-estimation metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaMetrics {
    pub hellinger_mean: f64,
    pub hellinger_sqrtn: f64,
    /// RMSE of the predictor against `M⋆` (model-based estimators only).
    pub rmse_m: Option<f64>,
    pub rank_m: Option<usize>,
    pub beta: Option<f64>,
}

/// Per-replicate completion metrics for one arm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionMetrics {
    pub rmse_a: f64,
    pub test_error: f64,
    pub rank_a: usize,
    pub tau: f64,
    pub iterations: usize,
}

/// Everything measured on one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub theta: BTreeMap<String, ThetaMetrics>,
    pub completion: BTreeMap<String, CompletionMetrics>,
    pub lambda: f64,
    pub error: Option<String>,
}

/// One line of the aggregated summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub stage: String,
    pub estimator: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Aggregated experiment output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub lambda: Option<f64>,
    pub taus: BTreeMap<String, f64>,
    pub records: Vec<ReplicateRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub failures: usize,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    truth: ThetaTruth<f64>,
    a_star: Mat,
    alpha1: f64,
    alpha2: f64,
    theta_cfg: SolverConfig<f64>,
}

fn union_kinds(cfg: &ExperimentConfig) -> Vec<EstimatorKind> {
    let mut kinds = cfg.theta_estimators.clone();
    for k in &cfg.completion_arms {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    kinds
}

/// Curvature-matched starting majorization constant for the completion
/// solver: a small multiple of the average weight curvature
/// `2·mean(W∘Θ†)/(n1 n2)`. Backtracking raises it as needed.
fn completion_start_l(w: &Mat, theta: &ThetaEstimate<f64>) -> f64 {
    let mut acc = 0.0;
    for (wv, tv) in w.values().iter().zip(theta.theta.values()) {
        acc += wv / tv;
    }
    let n = w.len() as f64;
    (8.0 * acc / (n * n)).max(1e-12)
}

fn completion_cfg(cfg: &ExperimentConfig, w: &Mat, theta: &ThetaEstimate<f64>) -> SolverConfig<f64> {
    let mut c = cfg.solver.to_config();
    c.l0 = cfg
        .completion_l0
        .unwrap_or_else(|| completion_start_l(w, theta));
    c
}

/// Build every requested probability estimate for one replicate's mask.
fn build_theta_estimates(
    ctx: &Context<'_>,
    w: &Mat,
    lambda: f64,
    kinds: &[EstimatorKind],
) -> Result<(BTreeMap<String, ThetaEstimate<f64>>, Option<ThetaFit<f64>>)> {
    let link = ctx.cfg.sim.link;
    let needs_alpha_fit = kinds.iter().any(|k| {
        matches!(
            k,
            EstimatorKind::Alpha | EstimatorKind::Beta(_) | EstimatorKind::Win(_)
        )
    });
    let alpha_fit = if needs_alpha_fit {
        Some(fit_unconstrained(
            w,
            link,
            ctx.alpha1,
            ctx.alpha2,
            lambda,
            &ctx.theta_cfg,
        )?)
    } else {
        None
    };

    let mut out = BTreeMap::new();
    for kind in kinds {
        let est = match kind {
            EstimatorKind::Alpha => {
                let fit = alpha_fit.as_ref().expect("alpha fit present");
                theta_from(
                    fit.decomposition.mu,
                    &fit.decomposition.z,
                    link,
                    Provenance::Unconstrained,
                    None,
                )
            }
            EstimatorKind::Beta(t) => {
                let fit = alpha_fit.as_ref().expect("alpha fit present");
                let beta = beta_from_fraction(&fit.decomposition.z, *t)?;
                let refit = refit_constrained(
                    w,
                    link,
                    fit.decomposition.mu,
                    beta,
                    lambda,
                    &ctx.theta_cfg,
                    Some(&fit.decomposition.z),
                )?;
                theta_from(
                    refit.decomposition.mu,
                    &refit.decomposition.z,
                    link,
                    Provenance::RefitBeta,
                    Some(beta),
                )
            }
            EstimatorKind::Win(t) => {
                let fit = alpha_fit.as_ref().expect("alpha fit present");
                let beta = beta_from_fraction(&fit.decomposition.z, *t)?;
                let zw = winsorize(&fit.decomposition.z, beta)?;
                theta_from(
                    fit.decomposition.mu,
                    &zw,
                    link,
                    Provenance::WinsorizedBeta,
                    Some(beta),
                )
            }
            EstimatorKind::Nw => nw_estimator(w)?,
            EstimatorKind::Uni => uniform_estimator(w)?,
            EstimatorKind::Known => {
                ThetaEstimate::from_matrix(&ctx.truth.theta_star, Provenance::Known)
            }
        };
        out.insert(kind.name(), est);
    }
    Ok((out, alpha_fit))
}

fn run_replicate(
    ctx: &Context<'_>,
    rep: usize,
    lambda: f64,
    taus: &BTreeMap<String, f64>,
) -> Result<ReplicateRecord> {
    let started = Instant::now();
    let cfg = ctx.cfg;
    let (y, w) = gen_noise_and_observe(&ctx.a_star, &ctx.truth.theta_star, &cfg.sim, rep as u64)?;
    let kinds = union_kinds(cfg);
    let (estimates, _) = build_theta_estimates(ctx, &w, lambda, &kinds)?;

    let mut theta_metrics = BTreeMap::new();
    for kind in &cfg.theta_estimators {
        let name = kind.name();
        let est = &estimates[&name];
        let h_mean = hellinger_sq(&est.theta, &ctx.truth.theta_star, HellingerNorm::Mean)?;
        let h_sqrtn = hellinger_sq(&est.theta, &ctx.truth.theta_star, HellingerNorm::SqrtN)?;
        let (rmse_m, rank_m) = match &est.decomposition {
            Some(dec) => {
                let m_hat = dec.predictor();
                (
                    Some(rmse(&m_hat, &ctx.truth.m_star)?),
                    Some(numerical_rank(&m_hat, 1e-8)?),
                )
            }
            None => (None, None),
        };
        theta_metrics.insert(
            name,
            ThetaMetrics {
                hellinger_mean: h_mean,
                hellinger_sqrtn: h_sqrtn,
                rmse_m,
                rank_m,
                beta: est.beta,
            },
        );
    }

    let mut completion_metrics = BTreeMap::new();
    if !cfg.completion_arms.is_empty() {
        let a_bound = match cfg.a_bound {
            Some(a) => a,
            None => default_a_bound(&y, &w)?,
        };
        for kind in &cfg.completion_arms {
            let name = kind.name();
            let est = &estimates[&name];
            let tau = *taus
                .get(&name)
                .ok_or_else(|| Error::invalid(format!("no tau resolved for arm {name}")))?;
            let ccfg = completion_cfg(cfg, &w, est);
            let fit = fit_completion(&y, &w, est, tau, a_bound, &ccfg)?;
            completion_metrics.insert(
                name,
                CompletionMetrics {
                    rmse_a: rmse(&fit.a_hat, &ctx.a_star)?,
                    test_error: test_error(&fit.a_hat, &ctx.a_star, &w)?,
                    rank_a: fit.numerical_rank,
                    tau,
                    iterations: fit.iterations,
                },
            );
        }
    }

    if cfg.verbose {
        eprintln!(
            "[replicate {rep}] done in {:.1}s",
            started.elapsed().as_secs_f64()
        );
    }
    Ok(ReplicateRecord {
        replicate: rep,
        theta: theta_metrics,
        completion: completion_metrics,
        lambda,
        error: None,
    })
}

fn resolve_lambda(ctx: &Context<'_>, w0: &Mat) -> Result<f64> {
    match &ctx.cfg.lambda {
        LambdaChoice::Fixed(l) => Ok(*l),
        LambdaChoice::AicGrid { grid, .. } => {
            if ctx.cfg.verbose {
                eprintln!("[tuning] AIC over {} lambda values", grid.len());
            }
            let (report, _) = select_lambda_aic_with_fit(
                w0,
                ctx.cfg.sim.link,
                ctx.alpha1,
                ctx.alpha2,
                grid,
                &ctx.theta_cfg,
            )?;
            if ctx.cfg.verbose {
                eprintln!("[tuning] chose lambda = {}", report.chosen);
            }
            Ok(report.chosen)
        }
    }
}

fn resolve_taus(
    ctx: &Context<'_>,
    y0: &Mat,
    w0: &Mat,
    lambda: f64,
) -> Result<BTreeMap<String, f64>> {
    let cfg = ctx.cfg;
    let mut taus = BTreeMap::new();
    if cfg.completion_arms.is_empty() {
        return Ok(taus);
    }
    match &cfg.tau {
        TauChoice::Fixed(t) => {
            for kind in &cfg.completion_arms {
                taus.insert(kind.name(), *t);
            }
        }
        TauChoice::CvGrid { grid, .. } => {
            let (estimates, _) = build_theta_estimates(ctx, w0, lambda, &cfg.completion_arms)?;
            let a_bound = match cfg.a_bound {
                Some(a) => a,
                None => default_a_bound(y0, w0)?,
            };
            for kind in &cfg.completion_arms {
                let name = kind.name();
                let est = &estimates[&name];
                if cfg.verbose {
                    eprintln!(
                        "[tuning] {}-fold CV over {} tau values for arm {name}",
                        cfg.cv_folds,
                        grid.len()
                    );
                }
                let ccfg = completion_cfg(cfg, w0, est);
                let report = select_tau_cv(
                    y0,
                    w0,
                    est,
                    grid,
                    cfg.cv_folds,
                    cfg.derived_cv_seed(),
                    a_bound,
                    &ccfg,
                )?;
                if cfg.verbose {
                    eprintln!("[tuning] arm {name}: chose tau = {:.6e}", report.chosen);
                }
                taus.insert(name, report.chosen);
            }
        }
    }
    Ok(taus)
}

fn aggregate(records: &[ReplicateRecord]) -> Vec<AggregateRow> {
    let mut series: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for rec in records {
        if rec.error.is_some() {
            continue;
        }
        for (est, m) in &rec.theta {
            let mut push = |metric: &str, v: Option<f64>| {
                if let Some(v) = v {
                    series
                        .entry(("theta".into(), est.clone(), metric.into()))
                        .or_default()
                        .push(v);
                }
            };
            push("hellinger_mean", Some(m.hellinger_mean));
            push("hellinger_sqrtn", Some(m.hellinger_sqrtn));
            push("rmse_m", m.rmse_m);
            push("rank_m", m.rank_m.map(|r| r as f64));
        }
        for (est, m) in &rec.completion {
            let mut push = |metric: &str, v: f64| {
                series
                    .entry(("completion".into(), est.clone(), metric.into()))
                    .or_default()
                    .push(v);
            };
            push("rmse_a", m.rmse_a);
            push("test_error", m.test_error);
            push("rank_a", m.rank_a as f64);
        }
    }
    series
        .into_iter()
        .map(|((stage, estimator, metric), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                stage,
                estimator,
                metric,
                mean,
                stderr,
                n,
            }
        })
        .collect()
}

/// Run the configured experiment; when `outdir` is given, write
/// per-replicate metrics, the summary (JSON and CSV) and the effective
/// configuration there.
pub fn run_experiment(cfg: &ExperimentConfig, outdir: Option<&Path>) -> Result<ExperimentSummary> {
    cfg.sim.validate()?;
    if cfg.replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    let truth = gen_theta::<f64>(&cfg.sim)?;
    let a_star = gen_target::<f64>(&cfg.sim)?;

    // Box bounds from the true decomposition unless overridden.
    let mu_star = truth.m_star.mean();
    let z_star = linalg::mean_center(&truth.m_star);
    let alpha1 = cfg
        .alpha1
        .unwrap_or_else(|| (cfg.alpha_margin * mu_star.abs()).max(1e-3));
    let alpha2 = cfg
        .alpha2
        .unwrap_or_else(|| (cfg.alpha_margin * z_star.max_abs()).max(1e-3));

    let ctx = Context {
        cfg,
        truth,
        a_star,
        alpha1,
        alpha2,
        theta_cfg: cfg.solver.to_config(),
    };

    // Tuning on replicate 0 when the policy is select-once.
    let (y0, w0) =
        gen_noise_and_observe(&ctx.a_star, &ctx.truth.theta_star, &cfg.sim, 0)?;
    let lambda_once = match &cfg.lambda {
        LambdaChoice::AicGrid {
            per_replicate: true,
            ..
        } => None,
        _ => Some(resolve_lambda(&ctx, &w0)?),
    };
    let taus_once = match &cfg.tau {
        TauChoice::CvGrid {
            per_replicate: true,
            ..
        } => None,
        _ => Some(resolve_taus(&ctx, &y0, &w0, lambda_once.unwrap_or(0.0))?),
    };
    drop((y0, w0));

    let one = |rep: usize| -> ReplicateRecord {
        let run = || -> Result<ReplicateRecord> {
            let (rep_lambda, rep_taus) = match (&lambda_once, &taus_once) {
                (Some(l), Some(t)) => (*l, t.clone()),
                _ => {
                    let (y, w) = gen_noise_and_observe(
                        &ctx.a_star,
                        &ctx.truth.theta_star,
                        &cfg.sim,
                        rep as u64,
                    )?;
                    let l = match &lambda_once {
                        Some(l) => *l,
                        None => resolve_lambda(&ctx, &w)?,
                    };
                    let t = match &taus_once {
                        Some(t) => t.clone(),
                        None => resolve_taus(&ctx, &y, &w, l)?,
                    };
                    (l, t)
                }
            };
            run_replicate(&ctx, rep, rep_lambda, &rep_taus)
        };
        match run() {
            Ok(rec) => rec,
            Err(e) => ReplicateRecord {
                replicate: rep,
                theta: BTreeMap::new(),
                completion: BTreeMap::new(),
                lambda: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    };

    let records: Vec<ReplicateRecord> = if cfg.parallel {
        (0..cfg.replicates).into_par_iter().map(one).collect()
    } else {
        (0..cfg.replicates).map(one).collect()
    };

    let failures = records.iter().filter(|r| r.error.is_some()).count();
    let aggregate_rows = aggregate(&records);
    let summary = ExperimentSummary {
        config: cfg.clone(),
        lambda: lambda_once,
        taus: taus_once.unwrap_or_default(),
        records,
        aggregate: aggregate_rows,
        failures,
    };

    if let Some(dir) = outdir {
        write_outputs(&summary, dir)?;
    }
    Ok(summary)
}

fn write_json_atomic(path: &Path, value: &impl Serialize) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, value)
            .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_outputs(summary: &ExperimentSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for rec in &summary.records {
        let path = dir.join(format!("replicate_{:03}.json", rec.replicate));
        write_json_atomic(&path, rec)?;
    }
    write_json_atomic(&dir.join("summary.json"), summary)?;
    write_json_atomic(&dir.join("effective_config.json"), &summary.config)?;

    let mut csv = String::from("stage,estimator,metric,mean,stderr,n\n");
    for row in &summary.aggregate {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.stage, row.estimator, row.metric, row.mean, row.stderr, row.n
        ));
    }
    let tmp = dir.join("summary.csv.tmp");
    std::fs::write(&tmp, csv)?;
    std::fs::rename(tmp, dir.join("summary.csv"))?;
    Ok(())
}
