//! Numerical checks of the determinant inequality and of the
//! law-of-iterated-logarithm envelopes on sample moments.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{ObfsError, Result};
use crate::numeric::linear_fit;
use crate::partition::FeatureSet;
use crate::posterior::{block_updates, HyperparamPolicy};
use crate::stats::{compute_stats, log_det_spd, mixture_sigma_n, Scope};
use crate::truth::{GroundTruthModel, SamplingScheme};

/// Relative slack allowed on `|pX + (1-p)Y| ≥ |X|^p |Y|^(1-p)`.
pub const FAN_SLACK: f64 = 1e-10;
/// Largest relative gap accepted as equality when `X = Y` or `p = 0`.
pub const FAN_EQUALITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FanReport {
    pub dim: usize,
    pub trials: usize,
    /// Random pairs whose determinant ratio fell below `1 - FAN_SLACK`.
    pub violations: usize,
    /// Smallest `ln|pX+(1-p)Y| - p ln|X| - (1-p) ln|Y|` over random pairs.
    pub min_log_gap: f64,
    /// Largest `|log gap|` over `X = Y` pairs and `p = 0` boundaries.
    pub max_equality_gap: f64,
}

impl FanReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.max_equality_gap <= FAN_EQUALITY_TOL
    }
}

/// `A Aᵀ / d + 0.05 I` with standard normal `A`: well conditioned and
/// almost surely distinct across draws.
fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let mut m = &a * a.transpose() / d as f64;
    for i in 0..d {
        m[(i, i)] += 0.05;
    }
    m
}

fn log_gap(x: &DMatrix<f64>, y: &DMatrix<f64>, p: f64) -> Result<f64> {
    let mix = x * p + y * (1.0 - p);
    Ok(log_det_spd(&mix)? - p * log_det_spd(x)? - (1.0 - p) * log_det_spd(y)?)
}

/// Draws `trials` random SPD pairs with `p ~ U(0, 1)` and checks the
/// inequality, then checks equality on `X = Y` and at `p = 0`.
pub fn fan_inequality_check(trials: usize, dim: usize, seed: u64) -> Result<FanReport> {
    if dim == 0 {
        return Err(ObfsError::InvalidExperiment(
            "dimension must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // ln(1 - slack): a log gap above this keeps the ratio within slack
    let floor = (-FAN_SLACK).ln_1p();
    let mut violations = 0;
    let mut min_log_gap = f64::INFINITY;
    let mut max_equality_gap: f64 = 0.0;
    for _ in 0..trials {
        let x = random_spd(&mut rng, dim);
        let y = random_spd(&mut rng, dim);
        let p: f64 = rng.random_range(f64::EPSILON..1.0);
        let g = log_gap(&x, &y, p)?;
        min_log_gap = min_log_gap.min(g);
        if g < floor {
            violations += 1;
        }
        max_equality_gap = max_equality_gap
            .max(log_gap(&x, &x, p)?.abs())
            .max(log_gap(&x, &y, 0.0)?.abs());
    }
    Ok(FanReport {
        dim,
        trials,
        violations,
        min_log_gap,
        max_equality_gap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Envelope {
    /// `sqrt(ln ln n / n)`
    #[serde(rename = "sqrt(loglog n / n)")]
    IteratedLog,
    /// `1 / n`
    #[serde(rename = "1/n")]
    Inverse,
}

impl Envelope {
    pub fn at(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Envelope::IteratedLog => (n.ln().ln() / n).sqrt(),
            Envelope::Inverse => 1.0 / n,
        }
    }
}

/// Factor by which a normalized quantity may exceed its grid-midpoint value.
pub const ENVELOPE_BOUND_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeSeries {
    pub quantity: &'static str,
    pub envelope: Envelope,
    pub n_grid: Vec<usize>,
    /// Raw deviation at each grid size.
    pub values: Vec<f64>,
    /// Deviation divided by the envelope.
    pub normalized: Vec<f64>,
    /// Least-squares slope of the normalized series against `ln n`.
    pub trend_slope: f64,
    pub midpoint: f64,
    /// Largest normalized value over the midpoint value.
    pub max_over_midpoint: f64,
}

impl EnvelopeSeries {
    pub fn non_increasing(&self) -> bool {
        self.trend_slope <= 0.0
    }

    pub fn bounded(&self) -> bool {
        self.max_over_midpoint <= ENVELOPE_BOUND_FACTOR
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub subset: FeatureSet,
    pub seed: u64,
    pub series: Vec<EnvelopeSeries>,
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Tracks the sample-moment deviations tracked against their envelopes on one sample
/// path (prefixes of a single draw) over `subset`.
///
/// Per grid size, maxima are taken over both classes and all entries:
/// mean error, `| |C_y|/|Σ̂_y| - 1 |`, sample covariance error,
/// `| |Σ̂_y|/|Σ_y| - 1 |`, `C_y` error, `| |C|/|Σ̂| - 1 |`,
/// `| |Σ̂|/|Σ_n| - 1 |` and `C` error against `Σ_n`, where `C` and `C_y`
/// are the posterior scale matrices under `policy`.
pub fn moment_envelope_check(
    truth: &GroundTruthModel,
    subset: &FeatureSet,
    n_grid: &[usize],
    seed: u64,
    policy: &HyperparamPolicy,
) -> Result<EnvelopeReport> {
    if n_grid.first().is_none_or(|&n| n < 16) {
        return Err(ObfsError::InvalidExperiment(
            "n_grid must be non-empty with every n >= 16".into(),
        ));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ObfsError::InvalidExperiment(
            "n_grid must be strictly ascending".into(),
        ));
    }
    if subset.is_empty() {
        return Err(ObfsError::EmptySubset);
    }
    let full = truth.sample(*n_grid.last().unwrap(), seed, SamplingScheme::Random);
    let moments = [truth.moments(0, subset)?, truth.moments(1, subset)?];
    let mut rows: Vec<[f64; 8]> = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let wrap = |e: ObfsError| ObfsError::Experiment {
            n,
            seed,
            source: Box::new(e),
        };
        let sample = full.prefix(n);
        let stats = compute_stats(&sample, subset).map_err(wrap)?;
        let mut q = [0.0f64; 8];
        for y in 0..2 {
            let scope = [Scope::Class0, Scope::Class1][y];
            let g = stats.group(scope);
            let (mu, sigma) = &moments[y];
            let (Some(mean), Some(cov)) = (&g.mean, &g.cov) else {
                return Err(wrap(ObfsError::InvalidExperiment(format!(
                    "class {y} has fewer than two points"
                ))));
            };
            let hp = policy.block(subset, scope).map_err(wrap)?;
            let c_y = block_updates(&stats, &hp, scope).map_err(wrap)?.c;
            let ld_cov = log_det_spd(cov).map_err(wrap)?;
            q[0] = q[0].max((mean - mu).amax());
            q[1] = q[1].max((log_det_spd(&c_y).map_err(wrap)? - ld_cov).exp_m1().abs());
            q[2] = q[2].max(max_abs_diff(cov, sigma));
            q[3] = q[3].max((ld_cov - log_det_spd(sigma).map_err(wrap)?).exp_m1().abs());
            q[4] = q[4].max(max_abs_diff(&c_y, sigma));
        }
        let rho = sample.n_class(0) as f64 / n as f64;
        let sigma_n = mixture_sigma_n(truth, subset, rho).map_err(wrap)?;
        let pooled_cov = stats.pooled.cov.as_ref().expect("n >= 16");
        let hp = policy.block(subset, Scope::Pooled).map_err(wrap)?;
        let c = block_updates(&stats, &hp, Scope::Pooled).map_err(wrap)?.c;
        let ld_pooled = log_det_spd(pooled_cov).map_err(wrap)?;
        q[5] = (log_det_spd(&c).map_err(wrap)? - ld_pooled).exp_m1().abs();
        q[6] = (ld_pooled - log_det_spd(&sigma_n).map_err(wrap)?)
            .exp_m1()
            .abs();
        q[7] = max_abs_diff(&c, &sigma_n);
        rows.push(q);
    }

    const NAMES: [(&str, Envelope); 8] = [
        ("mean_error", Envelope::IteratedLog),
        ("class_scale_det_ratio", Envelope::Inverse),
        ("class_cov_error", Envelope::IteratedLog),
        ("class_cov_det_ratio", Envelope::IteratedLog),
        ("class_scale_error", Envelope::IteratedLog),
        ("pooled_scale_det_ratio", Envelope::Inverse),
        ("pooled_cov_det_ratio", Envelope::IteratedLog),
        ("pooled_scale_error", Envelope::IteratedLog),
    ];
    let mid = n_grid.len() / 2;
    let log_n: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let series = NAMES
        .iter()
        .enumerate()
        .map(|(k, &(quantity, envelope))| {
            let values: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let normalized: Vec<f64> = values
                .iter()
                .zip(n_grid)
                .map(|(v, &n)| v / envelope.at(n))
                .collect();
            let trend_slope = linear_fit(&log_n, &normalized).map_or(0.0, |f| f.slope);
            let midpoint = normalized[mid];
            let max = normalized.iter().copied().fold(0.0, f64::max);
            EnvelopeSeries {
                quantity,
                envelope,
                n_grid: n_grid.to_vec(),
                values,
                normalized,
                trend_slope,
                midpoint,
                max_over_midpoint: if midpoint > 0.0 {
                    max / midpoint
                } else {
                    f64::INFINITY
                },
            }
        })
        .collect();
    Ok(EnvelopeReport {
        subset: subset.clone(),
        seed,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_holds_on_random_pairs() {
        for d in 1..=4 {
            let r = fan_inequality_check(200, d, 7 + d as u64).unwrap();
            assert!(r.passed(), "{r:?}");
            assert!(r.min_log_gap > 0.0);
        }
    }

    #[test]
    fn envelopes() {
        assert!((Envelope::Inverse.at(4) - 0.25).abs() < 1e-15);
        let n = 1024f64;
        assert!((Envelope::IteratedLog.at(1024) - (n.ln().ln() / n).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn short_grids_are_rejected() {
        let sc = crate::truth::scenario("d").unwrap();
        let e = moment_envelope_check(
            &sc.model,
            &FeatureSet::from([0, 1]),
            &[8, 64],
            1,
            &HyperparamPolicy::new(3),
        );
        assert!(matches!(e, Err(ObfsError::InvalidExperiment(_))));
    }
}
