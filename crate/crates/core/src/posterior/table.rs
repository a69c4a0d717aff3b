//! Exhaustive posterior over labeled partitions.

use super::prior::{PartitionPrior, PriorEval};
use super::score::{block_score, ScoreTable};
use super::HyperparamPolicy;
use crate::error::{ObfsError, Result};
use crate::numeric::LogSumExp;
use crate::partition::{
    for_each_labeled, validate, FeaturePartition, FeatureSet, PartitionCode, Role,
    DEFAULT_PARTITION_CAP, MAX_CODED_FEATURES,
};
use crate::stats::{LabeledSample, SampleStats};

/// Normalized posterior on every labeled partition of `{0..n}`, in
/// enumeration order, with the induced good-set and feature marginals.
#[derive(Clone, Debug)]
pub struct PosteriorTable {
    n_features: usize,
    codes: Vec<PartitionCode>,
    log_unnorm: Vec<f64>,
    log_z: f64,
    /// indexed by good-union bitmask
    marginal_g: Vec<f64>,
    log_marginal_f: Vec<f64>,
    log_complement_f: Vec<f64>,
}

impl PosteriorTable {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// `(code, ln π(P)q(P)a(P), π*(P))` in enumeration order.
    pub fn iter(&self) -> impl Iterator<Item = (PartitionCode, f64, f64)> + '_ {
        self.codes
            .iter()
            .zip(&self.log_unnorm)
            .map(|(&c, &l)| (c, l, (l - self.log_z).exp()))
    }

    fn index_of(&self, p: &FeaturePartition) -> Option<usize> {
        let code = PartitionCode::from_partition(p, self.n_features)?;
        self.codes.iter().position(|&c| c == code)
    }

    /// `ln π*(P)`; `None` for partitions that are not of `{0..n}`.
    pub fn log_posterior(&self, p: &FeaturePartition) -> Option<f64> {
        self.index_of(p).map(|i| self.log_unnorm[i] - self.log_z)
    }

    pub fn prob_of(&self, p: &FeaturePartition) -> Option<f64> {
        self.log_posterior(p).map(f64::exp)
    }

    /// `π*(G)`: posterior mass of partitions whose good union is `g`.
    pub fn marginal_good_set(&self, g: &FeatureSet) -> f64 {
        match g.to_mask() {
            Some(m) if (m as usize) < self.marginal_g.len() => self.marginal_g[m as usize],
            _ => 0.0,
        }
    }

    /// `π*(G)` for every good-union bitmask.
    pub fn good_set_marginals(&self) -> &[f64] {
        &self.marginal_g
    }

    pub fn marginal_f(&self, f: usize) -> f64 {
        self.log_marginal_f[f].exp()
    }

    pub fn marginals_f(&self) -> Vec<f64> {
        (0..self.n_features).map(|f| self.marginal_f(f)).collect()
    }

    /// `ln π*(f)`
    pub fn log_marginal_f(&self, f: usize) -> f64 {
        self.log_marginal_f[f]
    }

    /// `ln(1 - π*(f))`, summed directly over the partitions placing `f` in
    /// a bad block rather than subtracted from one.
    pub fn log_complement_f(&self, f: usize) -> f64 {
        self.log_complement_f[f]
    }

    pub fn probability_sum(&self) -> f64 {
        self.iter().map(|(_, _, p)| p).sum()
    }

    /// The `k` most probable partitions with `ln π*(P)` and `π*(P)`; ties
    /// keep enumeration order.
    pub fn top(&self, k: usize) -> Vec<(FeaturePartition, f64, f64)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.log_unnorm[b]
                .total_cmp(&self.log_unnorm[a])
                .then(a.cmp(&b))
        });
        idx.into_iter()
            .take(k)
            .map(|i| {
                let lp = self.log_unnorm[i] - self.log_z;
                (self.codes[i].decode(self.n_features), lp, lp.exp())
            })
            .collect()
    }

    /// The `k` most probable good sets; ties by ascending bitmask.
    pub fn top_good_sets(&self, k: usize) -> Vec<(FeatureSet, f64)> {
        let mut idx: Vec<usize> = (0..self.marginal_g.len()).collect();
        idx.sort_by(|&a, &b| {
            self.marginal_g[b]
                .total_cmp(&self.marginal_g[a])
                .then(a.cmp(&b))
        });
        idx.into_iter()
            .take(k)
            .map(|m| (FeatureSet::from_mask(m as u64), self.marginal_g[m]))
            .collect()
    }
}

fn mask_of(block: &FeatureSet) -> u32 {
    block.iter().fold(0u32, |m, f| m | 1 << f)
}

/// `ln π(P) + ln q(P) + ln a(P)` from precomputed block scores.
pub fn log_unnorm_from_scores(
    p: &FeaturePartition,
    scores: &ScoreTable,
    prior: &PartitionPrior,
) -> Result<f64> {
    let lp = prior.log_prior(p, scores.n_features())?;
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(p.blocks()
        .fold(lp, |acc, (role, b)| acc + scores.get(mask_of(b), role)))
}

/// `ln π(P) + ln q(P) + ln a(P)` for a single partition, scoring only its
/// own blocks.
pub fn log_posterior_unnorm(
    p: &FeaturePartition,
    sample: &LabeledSample,
    policy: &HyperparamPolicy,
    prior: &PartitionPrior,
) -> Result<f64> {
    let n = sample.n_features();
    let lp = prior.log_prior(p, n)?;
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    policy.validate()?;
    let stats = SampleStats::compute(sample);
    let mut total = lp;
    for (role, block) in p.blocks() {
        total += block_score(&stats.subset(block)?, policy, role)?.log_score;
    }
    Ok(total)
}

pub fn posterior_table_from_scores(
    scores: &ScoreTable,
    prior: &PartitionPrior,
    cap: usize,
) -> Result<PosteriorTable> {
    let n = scores.n_features();
    if n > cap.min(MAX_CODED_FEATURES) {
        return Err(ObfsError::CapExceeded {
            size: n,
            cap: cap.min(MAX_CODED_FEATURES),
        });
    }
    let eval = PriorEval::new(prior, n)?;
    let (good_w, bad_w): (Vec<f64>, Vec<f64>) = (1u32..1 << n)
        .map(|m| (scores.get(m, Role::Good), scores.get(m, Role::Bad)))
        .unzip();
    let block_good = |m: u32| good_w[m as usize - 1];
    let block_bad = |m: u32| bad_w[m as usize - 1];

    let mut codes = Vec::new();
    let mut log_unnorm = Vec::new();
    let mut norm = LogSumExp::default();
    for_each_labeled(n, |masks, good_bits| {
        let mut total = 0.0;
        let code = PartitionCode::from_masks(masks, good_bits);
        match &eval {
            PriorEval::Factorized {
                constant,
                good,
                bad,
            } => {
                total += constant;
                for (i, &m) in masks.iter().enumerate() {
                    total += if good_bits >> i & 1 == 1 {
                        good[m as usize] + block_good(m)
                    } else {
                        bad[m as usize] + block_bad(m)
                    };
                }
            }
            PriorEval::Table { constant, masses } => {
                total += constant + masses.get(&code).copied().unwrap_or(f64::NEG_INFINITY);
                for (i, &m) in masks.iter().enumerate() {
                    total += if good_bits >> i & 1 == 1 {
                        block_good(m)
                    } else {
                        block_bad(m)
                    };
                }
            }
        }
        norm.add(total);
        codes.push(code);
        log_unnorm.push(total);
    });
    let log_z = norm.value();
    if log_z == f64::NEG_INFINITY {
        return Err(ObfsError::ZeroPriorMass);
    }

    let mut by_good = vec![LogSumExp::default(); 1 << n];
    for (&code, &l) in codes.iter().zip(&log_unnorm) {
        let (masks, good_bits) = code.masks(n);
        let union = masks
            .iter()
            .enumerate()
            .filter(|(i, _)| good_bits >> i & 1 == 1)
            .fold(0usize, |u, (_, &m)| u | m as usize);
        by_good[union].add(l);
    }
    let marginal_g: Vec<f64> = by_good.iter().map(|a| (a.value() - log_z).exp()).collect();
    let mut log_marginal_f = Vec::with_capacity(n);
    let mut log_complement_f = Vec::with_capacity(n);
    for f in 0..n {
        let (mut with, mut without) = (LogSumExp::default(), LogSumExp::default());
        for (g, acc) in by_good.iter().enumerate() {
            if g >> f & 1 == 1 {
                with.merge(acc);
            } else {
                without.merge(acc);
            }
        }
        log_marginal_f.push(with.value() - log_z);
        log_complement_f.push(without.value() - log_z);
    }
    Ok(PosteriorTable {
        n_features: n,
        codes,
        log_unnorm,
        log_z,
        marginal_g,
        log_marginal_f,
        log_complement_f,
    })
}

pub fn posterior_table_enumerate(
    sample: &LabeledSample,
    policy: &HyperparamPolicy,
    prior: &PartitionPrior,
) -> Result<PosteriorTable> {
    posterior_table_enumerate_capped(sample, policy, prior, DEFAULT_PARTITION_CAP)
}

pub fn posterior_table_enumerate_capped(
    sample: &LabeledSample,
    policy: &HyperparamPolicy,
    prior: &PartitionPrior,
    cap: usize,
) -> Result<PosteriorTable> {
    let n = sample.n_features();
    if n > cap.min(MAX_CODED_FEATURES) {
        return Err(ObfsError::CapExceeded {
            size: n,
            cap: cap.min(MAX_CODED_FEATURES),
        });
    }
    let scores = ScoreTable::build(&SampleStats::compute(sample), policy)?;
    posterior_table_from_scores(&scores, prior, cap)
}

/// Checks that `p` partitions `{0..n}`.
pub fn check_partition(p: &FeaturePartition, n_features: usize) -> Result<()> {
    validate(p, &FeatureSet::range(n_features))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::default_names;

    fn small_sample() -> LabeledSample {
        let rows = vec![
            vec![0.3, -1.0, 0.2],
            vec![1.4, 0.1, -0.5],
            vec![-0.2, 0.6, 0.9],
            vec![2.1, -0.3, 0.0],
            vec![0.7, 0.8, -1.1],
            vec![1.9, 0.2, 0.4],
        ];
        LabeledSample::new(default_names(3), rows, vec![0, 1, 0, 1, 0, 1]).unwrap()
    }

    #[test]
    fn zero_data_uniform() {
        let t = posterior_table_enumerate(
            &LabeledSample::empty(3),
            &HyperparamPolicy::new(3),
            &PartitionPrior::Uniform,
        )
        .unwrap();
        assert_eq!(t.len(), 22);
        for (_, _, p) in t.iter() {
            assert!((p - 1.0 / 22.0).abs() < 1e-12);
        }
        for f in 0..3 {
            assert!((t.marginal_f(f) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn table_matches_single_partition_scoring() {
        let s = small_sample();
        let policy = HyperparamPolicy::new(3);
        let t = posterior_table_enumerate(&s, &policy, &PartitionPrior::Uniform).unwrap();
        assert!((t.probability_sum() - 1.0).abs() < 1e-12);
        for (code, l, _) in t.iter() {
            let p = code.decode(3);
            let direct = log_posterior_unnorm(&p, &s, &policy, &PartitionPrior::Uniform).unwrap();
            assert!((direct - l).abs() < 1e-10 * l.abs().max(1.0));
        }
    }

    #[test]
    fn marginals_are_consistent() {
        let s = small_sample();
        let t = posterior_table_enumerate(&s, &HyperparamPolicy::new(3), &PartitionPrior::Uniform)
            .unwrap();
        for f in 0..3 {
            let sum: f64 = (0..8)
                .filter(|g| g >> f & 1 == 1)
                .map(|g| t.good_set_marginals()[g])
                .sum();
            assert!((sum - t.marginal_f(f)).abs() < 1e-12);
            assert!((t.log_complement_f(f).exp() + t.marginal_f(f) - 1.0).abs() < 1e-12);
        }
        let top = t.top(3);
        assert!(top[0].2 >= top[1].2 && top[1].2 >= top[2].2);
        assert!((t.prob_of(&top[0].0).unwrap() - top[0].2).abs() < 1e-15);
    }

    #[test]
    fn zero_prior_gives_negative_infinity() {
        let s = small_sample();
        let p: FeaturePartition = "G:{0,1};B:{2}".parse().unwrap();
        let prior = PartitionPrior::Obf {
            inclusion: vec![0.5; 3],
        };
        let l = log_posterior_unnorm(&p, &s, &HyperparamPolicy::new(3), &prior).unwrap();
        assert_eq!(l, f64::NEG_INFINITY);
    }

    #[test]
    fn explicit_prior_with_no_mass_is_rejected() {
        let p: FeaturePartition = "G:{0};B:{1}|B:{2}".parse().unwrap();
        let prior = PartitionPrior::Explicit(vec![(p, 0.0)]);
        let e = posterior_table_enumerate(&small_sample(), &HyperparamPolicy::new(3), &prior);
        assert_eq!(e.unwrap_err(), ObfsError::ZeroPriorMass);
    }

    #[test]
    fn cap_is_enforced() {
        let e = posterior_table_enumerate_capped(
            &LabeledSample::empty(4),
            &HyperparamPolicy::new(4),
            &PartitionPrior::Uniform,
            3,
        );
        assert_eq!(e.unwrap_err(), ObfsError::CapExceeded { size: 4, cap: 3 });
    }
}
