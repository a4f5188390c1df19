//! Synthetic data generation for the replication harness.
//!
//! All randomness flows from one 64-bit seed through five named ChaCha20
//! substreams (factor matrices `U`, `V`, `U_A`, `V_A`, then noise and
//! mask). The factor streams depend only on the seed, so the probability
//! matrix and the target matrix are fixed per setting; the noise and mask
//! streams are additionally salted by the replicate index.

use crate::error::{Error, Result};
use crate::link::Link;
use crate::matrix::DenseMatrix;
use crate::real::{cast, to_f64, Real};
use crate::EPS_PROB;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Parameters of one simulation setting.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SimulationSpec {
    pub n1: usize,
    pub n2: usize,
    /// Rank of the predictor matrix including the offset direction (≥ 2);
    /// the low-rank part has rank `r_m − 1`.
    pub r_m: usize,
    /// Rank of the target matrix including the constant direction (≥ 2).
    pub r_a: usize,
    /// Desired average observation rate.
    pub target_rate: f64,
    /// Signal-to-noise ratio; the noise standard deviation scales as `1/snr`.
    pub snr: f64,
    pub seed: u64,
    pub link: Link,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n1: 600,
            n2: 600,
            r_m: 11,
            r_a: 11,
            target_rate: 0.2,
            snr: 1.0,
            seed: 0,
            link: Link::Logistic,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.n1.min(self.n2);
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if self.r_m < 2 || self.r_m - 1 > k || self.r_a < 2 || self.r_a - 1 > k {
            return Err(Error::invalid(
                "ranks must satisfy 2 <= r and r - 1 <= min(n1, n2)",
            ));
        }
        if !(0.0 < self.target_rate && self.target_rate < 1.0) {
            return Err(Error::invalid("target rate must lie in (0, 1)"));
        }
        if !(self.snr > 0.0) {
            return Err(Error::invalid("snr must be positive"));
        }
        Ok(())
    }

    /// Noise standard deviation: `0.5·√(r_a − 1 + 2.5²)` at `snr = 1`,
    /// scaled by `1/snr`.
    pub fn noise_sd(&self) -> f64 {
        0.5 * ((self.r_a - 1) as f64 + 6.25).sqrt() / self.snr
    }

    /// Standard deviation of the target factor entries, chosen so the
    /// low-rank product has per-entry standard deviation 2.5.
    pub fn target_factor_sd(&self) -> f64 {
        (6.25 / (self.r_a - 1) as f64).powf(0.25)
    }
}

// Substream roles. The factor streams are seed-only; noise and mask
// streams shift by replicate so every replicate redraws them while the
// underlying Θ⋆ and A⋆ stay fixed.
const STREAM_U: u64 = 0;
const STREAM_V: u64 = 1;
const STREAM_UA: u64 = 2;
const STREAM_VA: u64 = 3;

fn eps_stream(replicate: u64) -> u64 {
    (1 << 32) | replicate
}

fn mask_stream(replicate: u64) -> u64 {
    (2 << 32) | replicate
}

fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u128);
    rng
}

/// Draw an `n × k` matrix with iid `mean + sd·N(0,1)` entries in row-major
/// order from the given substream.
fn gaussian_matrix<T: Real>(
    rng: &mut ChaCha20Rng,
    n: usize,
    k: usize,
    mean: f64,
    sd: f64,
) -> DenseMatrix<T>
where
    StandardNormal: Distribution<T>,
{
    let mut values = Vec::with_capacity(n * k);
    let mean_t: T = cast(mean);
    let sd_t: T = cast(sd);
    for _ in 0..n * k {
        let z: T = StandardNormal.sample(rng);
        values.push(mean_t + sd_t * z);
    }
    DenseMatrix::new(n, k, values).expect("gaussian entries are finite")
}

/// Ground truth of the missing mechanism.
#[derive(Debug, Clone)]
pub struct ThetaTruth<T> {
    /// Predictor `M⋆ = UVᵀ − m̄·J`.
    pub m_star: DenseMatrix<T>,
    /// `Θ⋆ = F(M⋆)`, clamped into `(0,1)` strictly.
    pub theta_star: DenseMatrix<T>,
    /// The rate-matching offset `m̄`.
    pub m_bar: f64,
}

/// Generate the predictor and probability matrices: factor matrices with
/// iid `N(−0.4, 1)` entries, then a constant offset `m̄` found by
/// bisection so the average observation probability matches
/// `spec.target_rate` to `1e-10`.
pub fn gen_theta<T: Real>(spec: &SimulationSpec) -> Result<ThetaTruth<T>>
where
    StandardNormal: Distribution<T>,
{
    spec.validate()?;
    let k = spec.r_m - 1;
    let u: DenseMatrix<T> =
        gaussian_matrix(&mut substream(spec.seed, STREAM_U), spec.n1, k, -0.4, 1.0);
    let v: DenseMatrix<T> =
        gaussian_matrix(&mut substream(spec.seed, STREAM_V), spec.n2, k, -0.4, 1.0);
    let product = u.array().dot(&v.array().t());

    let mean_rate = |c: f64| -> f64 {
        let shift: T = cast(c);
        let mut acc = 0.0f64;
        for &p in product.iter() {
            acc += to_f64(spec.link.value(p - shift));
        }
        acc / product.len() as f64
    };

    // mean F(UVᵀ − cJ) is strictly decreasing in c; bracket then bisect.
    let (mut lo, mut hi) = (-50.0f64, 50.0f64);
    let mut expansions = 0;
    while mean_rate(lo) < spec.target_rate {
        lo *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::BracketFailure {
                residual: mean_rate(lo) - spec.target_rate,
            });
        }
    }
    while mean_rate(hi) > spec.target_rate {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::BracketFailure {
                residual: mean_rate(hi) - spec.target_rate,
            });
        }
    }
    let mut m_bar = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        m_bar = 0.5 * (lo + hi);
        residual = mean_rate(m_bar) - spec.target_rate;
        if residual.abs() <= 1e-10 {
            break;
        }
        if residual > 0.0 {
            lo = m_bar;
        } else {
            hi = m_bar;
        }
    }
    if residual.abs() > 1e-10 {
        return Err(Error::BracketFailure { residual });
    }

    let shift: T = cast(m_bar);
    let m_star = DenseMatrix::from_array_unchecked(product.mapv(|p| p - shift));
    let lo_p: T = cast(EPS_PROB);
    let hi_p = T::one() - lo_p;
    let theta_star = DenseMatrix::from_array_unchecked(
        m_star
            .array()
            .mapv(|m| spec.link.value(m).min(hi_p).max(lo_p)),
    );
    Ok(ThetaTruth {
        m_star,
        theta_star,
        m_bar,
    })
}

/// Generate the target matrix `A⋆ = 2.5·J + U_A V_Aᵀ` with factor entries
/// `N(0, σ²)` where `σ = (2.5²/(r_a−1))^{1/4}`.
pub fn gen_target<T: Real>(spec: &SimulationSpec) -> Result<DenseMatrix<T>>
where
    StandardNormal: Distribution<T>,
{
    spec.validate()?;
    let k = spec.r_a - 1;
    let sd = spec.target_factor_sd();
    let ua: DenseMatrix<T> =
        gaussian_matrix(&mut substream(spec.seed, STREAM_UA), spec.n1, k, 0.0, sd);
    let va: DenseMatrix<T> =
        gaussian_matrix(&mut substream(spec.seed, STREAM_VA), spec.n2, k, 0.0, sd);
    let offset: T = cast(2.5);
    Ok(DenseMatrix::from_array_unchecked(
        ua.array().dot(&va.array().t()).mapv(|p| p + offset),
    ))
}

/// Draw the noisy observations `Y = A⋆ + ε` (defined everywhere; masking
/// happens at consumption time) and the Bernoulli mask `W` with
/// `P(w_ij = 1) = θ⋆_ij`. The replicate index salts only these two
/// substreams.
pub fn gen_noise_and_observe<T: Real>(
    a_star: &DenseMatrix<T>,
    theta_star: &DenseMatrix<T>,
    spec: &SimulationSpec,
    replicate: u64,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)>
where
    StandardNormal: Distribution<T>,
{
    a_star.check_same_shape(theta_star, "gen_noise_and_observe")?;
    spec.validate()?;
    let sd: T = cast(spec.noise_sd());
    let mut eps_rng = substream(spec.seed, eps_stream(replicate));
    let mut y_values = Vec::with_capacity(a_star.len());
    for &a in a_star.values() {
        let z: T = StandardNormal.sample(&mut eps_rng);
        y_values.push(a + sd * z);
    }
    let y = DenseMatrix::new(a_star.n_rows(), a_star.n_cols(), y_values)?;

    let mut w_rng = substream(spec.seed, mask_stream(replicate));
    let mut w_values = Vec::with_capacity(theta_star.len());
    for &t in theta_star.values() {
        let u: f64 = w_rng.random();
        w_values.push(if u < to_f64(t) { T::one() } else { T::zero() });
    }
    let w = DenseMatrix::new(theta_star.n_rows(), theta_star.n_cols(), w_values)?;
    Ok((y, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::numerical_rank;
    use approx::assert_abs_diff_eq;

    fn small_spec() -> SimulationSpec {
        SimulationSpec {
            n1: 50,
            n2: 40,
            r_m: 4,
            r_a: 3,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn theta_hits_target_rate() {
        let truth: ThetaTruth<f64> = gen_theta(&small_spec()).unwrap();
        assert_abs_diff_eq!(truth.theta_star.mean(), 0.2, epsilon = 1e-8);
        assert!(truth
            .theta_star
            .values()
            .iter()
            .all(|&t| 0.0 < t && t < 1.0));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = small_spec();
        let a: ThetaTruth<f64> = gen_theta(&spec).unwrap();
        let b: ThetaTruth<f64> = gen_theta(&spec).unwrap();
        assert_eq!(a.theta_star, b.theta_star);
        assert_eq!(a.m_star, b.m_star);

        let ta: Mat = gen_target(&spec).unwrap();
        let tb: Mat = gen_target(&spec).unwrap();
        assert_eq!(ta, tb);

        let (y1, w1) = gen_noise_and_observe(&ta, &a.theta_star, &spec, 3).unwrap();
        let (y2, w2) = gen_noise_and_observe(&ta, &a.theta_star, &spec, 3).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(w1, w2);
    }

    use crate::Mat;

    #[test]
    fn replicate_salts_noise_and_mask_only() {
        let spec = small_spec();
        let truth: ThetaTruth<f64> = gen_theta(&spec).unwrap();
        let a: Mat = gen_target(&spec).unwrap();
        let (y0, w0) = gen_noise_and_observe(&a, &truth.theta_star, &spec, 0).unwrap();
        let (y1, w1) = gen_noise_and_observe(&a, &truth.theta_star, &spec, 1).unwrap();
        assert_ne!(y0, y1);
        assert_ne!(w0, w1);
    }

    #[test]
    fn predictor_rank_structure() {
        let spec = SimulationSpec {
            n1: 60,
            n2: 60,
            r_m: 6,
            r_a: 5,
            seed: 5,
            ..Default::default()
        };
        let truth: ThetaTruth<f64> = gen_theta(&spec).unwrap();
        // Undo the offset: UVᵀ has rank exactly r_m − 1.
        let product = Mat::from_array(truth.m_star.array() + truth.m_bar).unwrap();
        assert_eq!(numerical_rank(&product, 1e-8).unwrap(), spec.r_m - 1);
        assert!(numerical_rank(&truth.m_star, 1e-8).unwrap() <= spec.r_m);

        let a: Mat = gen_target(&spec).unwrap();
        let centered = Mat::from_array(a.array() - 2.5).unwrap();
        assert_eq!(numerical_rank(&centered, 1e-8).unwrap(), spec.r_a - 1);
    }

    #[test]
    fn target_moments() {
        let spec = SimulationSpec {
            n1: 80,
            n2: 80,
            r_m: 3,
            r_a: 2,
            seed: 21,
            ..Default::default()
        };
        assert_abs_diff_eq!(spec.target_factor_sd(), 6.25f64.powf(0.25), epsilon = 1e-12);
        let a: Mat = gen_target(&spec).unwrap();
        // Entry std of the low-rank part is 2.5; the sample mean of n²
        // entries concentrates around 2.5 (entries are correlated through
        // the factors, so allow a generous band).
        assert!((a.mean() - 2.5).abs() < 1.0);
    }

    #[test]
    fn noise_sd_formula() {
        let spec = SimulationSpec {
            r_a: 11,
            snr: 1.0,
            ..Default::default()
        };
        assert_abs_diff_eq!(spec.noise_sd(), 0.5 * 16.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(spec.noise_sd(), 2.0155644370746373, epsilon = 1e-12);
    }

    #[test]
    fn observation_rate_concentrates() {
        let spec = SimulationSpec {
            n1: 100,
            n2: 100,
            r_m: 3,
            r_a: 2,
            seed: 9,
            ..Default::default()
        };
        let truth: ThetaTruth<f64> = gen_theta(&spec).unwrap();
        let a: Mat = gen_target(&spec).unwrap();
        let (_, w) = gen_noise_and_observe(&a, &truth.theta_star, &spec, 0).unwrap();
        let rate = w.mean();
        let sd = (0.2 * 0.8 / 10_000.0f64).sqrt();
        assert!(
            (rate - truth.theta_star.mean()).abs() <= 3.0 * sd,
            "empirical rate {rate} too far from target"
        );
    }

    #[test]
    fn infinite_snr_recovers_target() {
        let spec = SimulationSpec {
            n1: 20,
            n2: 20,
            r_m: 3,
            r_a: 3,
            snr: 1e12,
            seed: 2,
            ..Default::default()
        };
        let truth: ThetaTruth<f64> = gen_theta(&spec).unwrap();
        let a: Mat = gen_target(&spec).unwrap();
        let (y, _) = gen_noise_and_observe(&a, &truth.theta_star, &spec, 0).unwrap();
        assert!(y.sub(&a).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = small_spec();
        spec.r_m = 1;
        assert!(gen_theta::<f64>(&spec).is_err());
        let mut spec = small_spec();
        spec.target_rate = 1.5;
        assert!(gen_theta::<f64>(&spec).is_err());
    }
}
