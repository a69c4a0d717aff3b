//! Experiments on posterior concentration as the sample grows.

mod checks;
mod rates;
mod sweep;

pub use checks::{
    fan_inequality_check, moment_envelope_check, Envelope, EnvelopeReport, EnvelopeSeries,
    FanReport, ENVELOPE_BOUND_FACTOR, FAN_EQUALITY_TOL, FAN_SLACK,
};
pub use rates::{
    fit_rates, ClassRate, FeatureRate, FitOptions, FitStatus, RateFit, RateReport, MIN_FIT_POINTS,
};
pub use sweep::{
    classify_partition, run_sweep, PartitionClass, SweepConfig, SweepPoint, SweepResult,
};
