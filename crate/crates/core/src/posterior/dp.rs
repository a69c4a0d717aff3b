//! Sums over set partitions by dynamic programming on subsets.
//!
//! For block weights `W(A)`, `Z(S) = Σ_{T ⊆ S, min S ∈ T} W(T) · Z(S \ T)`
//! sums `Π W(block)` over every set partition of `S` in `O(3^|F|)`. Letting
//! each block take either label folds the labels in: `W = W_good + W_bad`.

use serde::Serialize;

use super::prior::{PartitionPrior, PriorEval};
use super::score::ScoreTable;
use super::HyperparamPolicy;
use crate::error::{ObfsError, Result};
use crate::numeric::LogSumExp;
use crate::stats::{LabeledSample, SampleStats};

/// `ln Σ_P Π_{A ∈ P} e^{w[A]}` over set partitions of `{0..n}`.
pub(crate) fn log_partition_sum(n: usize, log_w: &[f64]) -> f64 {
    let full = (1usize << n) - 1;
    let mut z = vec![f64::NEG_INFINITY; 1 << n];
    z[0] = 0.0;
    for s in 1..=full {
        let low = s & s.wrapping_neg();
        let rest = s ^ low;
        let mut acc = LogSumExp::default();
        // every subset `sub` of `rest`, including the empty one
        let mut sub = rest;
        loop {
            let t = sub | low;
            acc.add(log_w[t] + z[s ^ t]);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        z[s] = acc.value();
    }
    z[full]
}

/// Normalizer and per-feature marginal posteriors from the subset DP.
///
/// `log_z_good[f]` and `log_z_bad[f]` restrict the sum to partitions placing
/// `f` in a good or a bad block, so `π*(f) = exp(log_z_good[f] - log_z)` and
/// `1 - π*(f) = exp(log_z_bad[f] - log_z)` both keep full relative precision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpMarginals {
    pub log_z: f64,
    pub log_z_good: Vec<f64>,
    pub log_z_bad: Vec<f64>,
}

impl DpMarginals {
    pub fn n_features(&self) -> usize {
        self.log_z_good.len()
    }

    pub fn marginal(&self, f: usize) -> f64 {
        (self.log_z_good[f] - self.log_z).exp()
    }

    pub fn marginals(&self) -> Vec<f64> {
        (0..self.n_features()).map(|f| self.marginal(f)).collect()
    }

    /// `ln π*(f)`
    pub fn log_marginal(&self, f: usize) -> f64 {
        self.log_z_good[f] - self.log_z
    }

    /// `ln(1 - π*(f))`
    pub fn log_complement(&self, f: usize) -> f64 {
        self.log_z_bad[f] - self.log_z
    }
}

pub fn dp_from_scores(scores: &ScoreTable, prior: &PartitionPrior) -> Result<DpMarginals> {
    let n = scores.n_features();
    if !prior.is_factorized() {
        return Err(ObfsError::UnsupportedPrior);
    }
    let (constant, pg, pb) = match PriorEval::new(prior, n)? {
        PriorEval::Factorized {
            constant,
            good,
            bad,
        } => (constant, good, bad),
        PriorEval::Table { .. } => return Err(ObfsError::UnsupportedPrior),
    };
    use crate::partition::Role;
    let size = 1usize << n;
    let mut good = vec![f64::NEG_INFINITY; size];
    let mut bad = vec![f64::NEG_INFINITY; size];
    let mut both = vec![f64::NEG_INFINITY; size];
    for mask in 1..size {
        good[mask] = pg[mask] + scores.get(mask as u32, Role::Good);
        bad[mask] = pb[mask] + scores.get(mask as u32, Role::Bad);
        let mut acc = LogSumExp::default();
        acc.add(good[mask]);
        acc.add(bad[mask]);
        both[mask] = acc.value();
    }
    let log_z = constant + log_partition_sum(n, &both);
    if log_z == f64::NEG_INFINITY {
        return Err(ObfsError::ZeroPriorMass);
    }
    let forced = |f: usize, forced_w: &[f64]| {
        let w: Vec<f64> = (0..size)
            .map(|m| {
                if m >> f & 1 == 1 {
                    forced_w[m]
                } else {
                    both[m]
                }
            })
            .collect();
        constant + log_partition_sum(n, &w)
    };
    let log_z_good = (0..n).map(|f| forced(f, &good)).collect();
    let log_z_bad = (0..n).map(|f| forced(f, &bad)).collect();
    Ok(DpMarginals {
        log_z,
        log_z_good,
        log_z_bad,
    })
}

/// Marginal posteriors without enumerating partitions; requires a prior
/// that factorizes over blocks.
pub fn posterior_marginals_dp(
    sample: &LabeledSample,
    policy: &HyperparamPolicy,
    prior: &PartitionPrior,
) -> Result<DpMarginals> {
    if !prior.is_factorized() {
        return Err(ObfsError::UnsupportedPrior);
    }
    let scores = ScoreTable::build(&SampleStats::compute(sample), policy)?;
    dp_from_scores(&scores, prior)
}
