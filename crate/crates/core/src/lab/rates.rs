//! Convergence-rate fits over the tail of a sweep.

use serde::Serialize;

use super::sweep::{PartitionClass, SweepPoint, SweepResult};
use crate::numeric::{linear_fit, LinearFit};
use crate::partition::Role;

/// Fewest usable points a rate is fitted on.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitStatus {
    Fitted,
    /// The response is constant; slope reported as 0.
    Degenerate,
    /// Fewer than [`MIN_FIT_POINTS`] usable points.
    Insufficient,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FitOptions {
    /// Drop points whose `π*(f)` rounds to 1 from good-feature fits. The
    /// stored `ln(1 - π*(f))` is accumulated directly and stays accurate
    /// past that point, so this is off by default.
    pub censor_saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub status: FitStatus,
    pub fit: Option<LinearFit>,
    /// Grid sizes that entered the fit.
    pub used: Vec<usize>,
    /// Tail grid sizes left out of the fit.
    pub censored: Vec<usize>,
}

fn fit_series(points: &[(usize, f64, bool)], x_of: impl Fn(usize) -> f64) -> RateFit {
    let (mut used, mut censored) = (Vec::new(), Vec::new());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(n, y, keep) in points {
        let x = x_of(n);
        if keep && y.is_finite() && x.is_finite() {
            used.push(n);
            xs.push(x);
            ys.push(y);
        } else {
            censored.push(n);
        }
    }
    if xs.len() < MIN_FIT_POINTS {
        return RateFit {
            status: FitStatus::Insufficient,
            fit: None,
            used,
            censored,
        };
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return RateFit {
            status: FitStatus::Degenerate,
            fit: Some(LinearFit {
                slope: 0.0,
                intercept: ys[0],
                rms_residual: 0.0,
            }),
            used,
            censored,
        };
    }
    let fit = linear_fit(&xs, &ys);
    RateFit {
        status: if fit.is_some() {
            FitStatus::Fitted
        } else {
            FitStatus::Insufficient
        },
        fit,
        used,
        censored,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureRate {
    pub feature: usize,
    /// Role of the feature in the true partition.
    pub role: Role,
    /// Good features: `ln(1 - π*(f))` against `n`. Bad features: `ln π*(f)`
    /// against `ln n`.
    pub rate: RateFit,
    /// First grid size at which `π*(f)` rounds to 1 (good) or 0 (bad).
    pub saturation_n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassRate {
    pub class: PartitionClass,
    /// Against `n` for the exponential class (slope `ln r`), against `ln n`
    /// for the polynomial class (slope `-s`).
    pub rate: RateFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub seed: u64,
    pub features: Vec<FeatureRate>,
    pub classes: Vec<ClassRate>,
}

impl RateReport {
    /// Slope signs agree with the expected decay for every feature that
    /// could be fitted; `None` when some feature had too few points.
    pub fn feature_signs_ok(&self) -> Option<bool> {
        let mut ok = true;
        for f in &self.features {
            match f.rate.status {
                FitStatus::Fitted => ok &= f.rate.fit.is_some_and(|l| l.slope < 0.0),
                FitStatus::Degenerate => ok = false,
                FitStatus::Insufficient => return None,
            }
        }
        Some(ok)
    }
}

/// Tail half of the grid: the last `ceil(len / 2)` points.
fn tail(path: &[&SweepPoint]) -> Vec<SweepPoint> {
    let start = path.len() / 2;
    path[start..].iter().map(|&p| p.clone()).collect()
}

/// Fits per-feature and per-class rates on each replicate's tail grid.
pub fn fit_rates(sweep: &SweepResult, options: FitOptions) -> Vec<RateReport> {
    let n_features = sweep.feature_names.len();
    sweep
        .seeds
        .iter()
        .map(|&seed| {
            let path = sweep.path(seed);
            let tail = tail(&path);
            let features = (0..n_features)
                .map(|f| {
                    let good = sweep.good_set.contains(&f);
                    let first = |pred: &dyn Fn(&SweepPoint) -> bool| {
                        path.iter().find(|p| pred(p)).map(|p| p.n)
                    };
                    if good {
                        let series: Vec<_> = tail
                            .iter()
                            .map(|p| {
                                let keep = !(options.censor_saturated && p.marginals[f] == 1.0);
                                (p.n, p.log_complements[f], keep)
                            })
                            .collect();
                        FeatureRate {
                            feature: f,
                            role: Role::Good,
                            rate: fit_series(&series, |n| n as f64),
                            saturation_n: first(&|p| p.marginals[f] == 1.0),
                        }
                    } else {
                        let series: Vec<_> = tail
                            .iter()
                            .map(|p| (p.n, p.log_marginals[f], p.n > 0))
                            .collect();
                        FeatureRate {
                            feature: f,
                            role: Role::Bad,
                            rate: fit_series(&series, |n| (n as f64).ln()),
                            saturation_n: first(&|p| p.marginals[f] == 0.0),
                        }
                    }
                })
                .collect();
            let class = |c: PartitionClass| {
                let series: Vec<_> = tail
                    .iter()
                    .filter_map(|p| {
                        let v = match c {
                            PartitionClass::Exponential => p.max_log_ratio_exponential,
                            _ => p.max_log_ratio_polynomial,
                        }?;
                        Some((p.n, v, p.n > 0))
                    })
                    .collect();
                let rate = match c {
                    PartitionClass::Exponential => fit_series(&series, |n| n as f64),
                    _ => fit_series(&series, |n| (n as f64).ln()),
                };
                ClassRate { class: c, rate }
            };
            let mut classes = Vec::new();
            if tail.iter().any(|p| p.max_log_ratio_exponential.is_some()) {
                classes.push(class(PartitionClass::Exponential));
            }
            if tail.iter().any(|p| p.max_log_ratio_polynomial.is_some()) {
                classes.push(class(PartitionClass::Polynomial));
            }
            RateReport {
                seed,
                features,
                classes,
            }
        })
        .collect()
}
