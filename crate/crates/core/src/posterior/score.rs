//! Conjugate updates and per-block log scores.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::hyper::{BlockHyperparams, HyperparamPolicy};
use crate::error::{ObfsError, Result};
use crate::numeric::ln_mv_gamma;
use crate::partition::{FeatureSet, Role};
use crate::stats::{log_det_spd, SampleStats, Scope, SubsetStats};

/// Posterior hyperparameters of one block in one scope.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockUpdate {
    pub nu_star: f64,
    pub kappa_star: f64,
    pub s_star: DMatrix<f64>,
    /// `S* / (κ* - |A| - 1)`
    pub c: DMatrix<f64>,
    pub log_q: f64,
    pub log_det_c: f64,
}

impl BlockUpdate {
    /// `ln Q - 0.5|A|κ* ln(κ* - |A| - 1) - 0.5κ* ln|C|`: this scope's
    /// contribution to `ln q(P) + ln a(P)`.
    pub fn log_score(&self) -> f64 {
        let d = self.s_star.nrows() as f64;
        let k = self.kappa_star;
        self.log_q - 0.5 * d * k * (k - d - 1.0).ln() - 0.5 * k * self.log_det_c
    }
}

/// `ln(K·L)` of a proper normal-inverse-Wishart prior.
pub(crate) fn proper_log_kl(hp: &BlockHyperparams, log_det_s: f64) -> f64 {
    let d = hp.dim() as f64;
    let log_k = 0.5 * hp.kappa * log_det_s
        - 0.5 * hp.kappa * d * LN_2
        - ln_mv_gamma(hp.dim(), 0.5 * hp.kappa);
    let log_l = -0.5 * d * (2.0 * PI / hp.nu).ln();
    log_k + log_l
}

/// Conjugate update of `hp` by the observations of `scope` in `stats`.
///
/// With fewer than two observations the scatter term `(n - 1)Σ̂` is zero;
/// with none the rank-one mean term vanishes as well.
pub fn block_updates(
    stats: &SubsetStats,
    hp: &BlockHyperparams,
    scope: Scope,
) -> Result<BlockUpdate> {
    let d = stats.subset.len();
    if hp.dim() != d {
        return Err(ObfsError::InvalidHyperparams(format!(
            "hyperparameters are {}-dimensional for a {d}-feature block",
            hp.dim()
        )));
    }
    hp.validate()?;
    let g = stats.group(scope);
    let n_y = g.count as f64;
    let nu_star = hp.nu + n_y;
    let kappa_star = hp.kappa + n_y;
    let df = d as f64;
    if !(nu_star > 0.0) {
        return Err(ObfsError::InvalidHyperparams(format!(
            "nu* = {nu_star} must be > 0"
        )));
    }
    let slack = kappa_star - df - 1.0;
    if !(slack > 0.0) {
        return Err(ObfsError::DegenerateKappa {
            size: d,
            value: slack,
        });
    }

    let mut s_star = hp.scale.clone();
    if let Some(cov) = &g.cov {
        s_star += cov * (n_y - 1.0);
    }
    if let Some(mean) = &g.mean {
        let diff = mean - &hp.location;
        s_star += &diff * diff.transpose() * (hp.nu * n_y / nu_star);
    }
    let log_det_s_star = log_det_spd(&s_star)?;

    let log_kl = match hp.log_kl {
        Some(v) => v,
        None => proper_log_kl(hp, log_det_spd(&hp.scale)?),
    };
    let log_q = log_kl
        + 0.5 * kappa_star * df * LN_2
        + ln_mv_gamma(d, 0.5 * kappa_star)
        + 0.5 * df * (2.0 * PI / nu_star).ln();

    Ok(BlockUpdate {
        nu_star,
        kappa_star,
        c: &s_star / slack,
        s_star,
        log_q,
        log_det_c: log_det_s_star - df * slack.ln(),
    })
}

/// Log score of a block under one role.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockScore {
    pub subset: FeatureSet,
    pub role: Role,
    pub log_score: f64,
    /// Class 0 and class 1 updates for a good block, the pooled one for bad.
    pub updates: Vec<(Scope, BlockUpdate)>,
}

pub fn block_score(
    stats: &SubsetStats,
    policy: &HyperparamPolicy,
    role: Role,
) -> Result<BlockScore> {
    let scopes: &[Scope] = match role {
        Role::Good => &[Scope::Class0, Scope::Class1],
        Role::Bad => &[Scope::Pooled],
    };
    let wrap = |e: ObfsError| ObfsError::Block {
        block: stats.subset.to_string(),
        role,
        source: Box::new(e),
    };
    let mut updates = Vec::with_capacity(scopes.len());
    let mut log_score = 0.0;
    for &scope in scopes {
        let hp = policy.block(&stats.subset, scope).map_err(wrap)?;
        let u = block_updates(stats, &hp, scope).map_err(wrap)?;
        log_score += u.log_score();
        updates.push((scope, u));
    }
    Ok(BlockScore {
        subset: stats.subset.clone(),
        role,
        log_score,
        updates,
    })
}

/// Good and bad log scores of every non-empty subset of `{0..n}`, indexed
/// by bitmask. A subset's score does not depend on the partition around it,
/// so one table serves every partition.
#[derive(Clone, Debug)]
pub struct ScoreTable {
    n_features: usize,
    good: Vec<f64>,
    bad: Vec<f64>,
}

/// Largest feature count a dense score table is built for.
pub const MAX_TABLE_FEATURES: usize = 20;

impl ScoreTable {
    pub fn build(stats: &SampleStats, policy: &HyperparamPolicy) -> Result<Self> {
        let n = stats.n_features();
        if n == 0 || n > MAX_TABLE_FEATURES {
            return Err(ObfsError::CapExceeded {
                size: n,
                cap: MAX_TABLE_FEATURES,
            });
        }
        policy.validate()?;
        let scores: Vec<(f64, f64)> = (1u32..1 << n)
            .into_par_iter()
            .map(|mask| {
                let sub = stats.subset_mask(mask)?;
                let g = block_score(&sub, policy, Role::Good)?.log_score;
                let b = block_score(&sub, policy, Role::Bad)?.log_score;
                Ok((g, b))
            })
            .collect::<Result<_>>()?;
        let mut good = vec![f64::NAN; 1 << n];
        let mut bad = vec![f64::NAN; 1 << n];
        for (i, (g, b)) in scores.into_iter().enumerate() {
            good[i + 1] = g;
            bad[i + 1] = b;
        }
        Ok(ScoreTable {
            n_features: n,
            good,
            bad,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn get(&self, mask: u32, role: Role) -> f64 {
        match role {
            Role::Good => self.good[mask as usize],
            Role::Bad => self.bad[mask as usize],
        }
    }

    /// Adds `delta` to one stored score. Used to check that the oracle
    /// suites notice a corrupted score.
    pub fn perturb(&mut self, mask: u32, role: Role, delta: f64) {
        match role {
            Role::Good => self.good[mask as usize] += delta,
            Role::Bad => self.bad[mask as usize] += delta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{compute_stats, default_names, LabeledSample};
    use nalgebra::DVector;

    fn unit_hp(nu: f64, kappa: f64) -> BlockHyperparams {
        BlockHyperparams {
            nu,
            kappa,
            scale: DMatrix::identity(1, 1),
            location: DVector::zeros(1),
            log_kl: None,
        }
    }

    fn one_feature(class0: &[f64]) -> SubsetStats {
        let rows = class0.iter().map(|&v| vec![v]).collect();
        let s = LabeledSample::new(default_names(1), rows, vec![0; class0.len()]).unwrap();
        compute_stats(&s, &FeatureSet::from([0])).unwrap()
    }

    #[test]
    fn degrees_of_freedom_update() {
        let stats = one_feature(&[0.1, 0.4, -0.3, 1.2, 0.8]);
        let u = block_updates(&stats, &unit_hp(1.0, 3.0), Scope::Class0).unwrap();
        assert_eq!(u.nu_star, 6.0);
        assert_eq!(u.kappa_star, 8.0);
    }

    #[test]
    fn scalar_scale_update() {
        let stats = one_feature(&[1.0, 3.0]);
        let u = block_updates(&stats, &unit_hp(1.0, 3.0), Scope::Class0).unwrap();
        // 1 + (2 - 1)·2 + (1·2 / 3)·(2 - 0)²
        let expect = 1.0 + 2.0 + 2.0 / 3.0 * 4.0;
        assert!((u.s_star[(0, 0)] - expect).abs() < 1e-14);
        assert!((u.c[(0, 0)] - expect / (5.0 - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn empty_scope_cancels_exactly() {
        let stats = one_feature(&[1.0, 3.0]);
        let u = block_updates(&stats, &unit_hp(1.0, 4.5), Scope::Class1).unwrap();
        assert_eq!(u.s_star, DMatrix::identity(1, 1));
        assert!(u.log_score().abs() < 1e-13, "{}", u.log_score());
    }

    #[test]
    fn degenerate_kappa_is_reported() {
        let stats = one_feature(&[1.0]);
        // κ* - |A| - 1 = 1 + 0 - 2 < 0 for the empty class
        let e = block_updates(&stats, &unit_hp(1.0, 1.0), Scope::Class1).unwrap_err();
        assert!(matches!(e, ObfsError::DegenerateKappa { size: 1, .. }));
        assert!(e.is_numeric());
    }

    #[test]
    fn block_errors_name_the_block() {
        let stats = one_feature(&[1.0]);
        let policy = HyperparamPolicy::new(1).with_kappa_offset(1.5);
        let e = block_score(&stats, &policy, Role::Good).unwrap_err();
        match e {
            ObfsError::Block { block, role, .. } => {
                assert_eq!(block, "{0}");
                assert_eq!(role, Role::Good);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
