use std::collections::HashMap;

use crate::error::{ObfsError, Result};
use crate::numeric::LogSumExp;
use crate::partition::{
    labeled_partition_count, validate, FeaturePartition, FeatureSet, PartitionCode, Role,
};

/// Prior over labeled feature partitions.
#[derive(Clone, Debug, PartialEq)]
pub enum PartitionPrior {
    /// Equal mass on every valid partition.
    Uniform,
    /// All blocks are singletons and `{f ∈ Ḡ}` are independent events with
    /// probabilities `inclusion[f]`.
    Obf { inclusion: Vec<f64> },
    /// Each block of size `k` carries weight `exp(-penalty·(k - 1))`,
    /// normalized over all partitions.
    BlockSize { penalty: f64 },
    /// Unnormalized masses on listed partitions; all others get zero.
    Explicit(Vec<(FeaturePartition, f64)>),
}

impl PartitionPrior {
    pub fn is_factorized(&self) -> bool {
        !matches!(self, PartitionPrior::Explicit(_))
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        match self {
            PartitionPrior::Uniform => Ok(()),
            PartitionPrior::Obf { inclusion } => {
                if inclusion.len() != n_features {
                    return Err(ObfsError::InvalidHyperparams(format!(
                        "{} inclusion probabilities for {n_features} features",
                        inclusion.len()
                    )));
                }
                match inclusion.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
                    Some(f) => Err(ObfsError::InvalidInclusionPrior {
                        feature: f,
                        value: inclusion[f],
                    }),
                    None => Ok(()),
                }
            }
            PartitionPrior::BlockSize { penalty } => {
                if penalty.is_finite() {
                    Ok(())
                } else {
                    Err(ObfsError::InvalidHyperparams(
                        "block-size penalty must be finite".into(),
                    ))
                }
            }
            PartitionPrior::Explicit(entries) => {
                let universe = FeatureSet::range(n_features);
                for (p, w) in entries {
                    validate(p, &universe)?;
                    if !(*w >= 0.0) || !w.is_finite() {
                        return Err(ObfsError::InvalidHyperparams(format!(
                            "prior mass {w} on {p} must be finite and non-negative"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Unnormalized log weight of one block, for factorized priors.
    pub(crate) fn block_log_weight(&self, mask: u32, role: Role) -> Result<f64> {
        let size = mask.count_ones();
        match self {
            PartitionPrior::Uniform => Ok(0.0),
            PartitionPrior::BlockSize { penalty } => Ok(-penalty * (size as f64 - 1.0)),
            PartitionPrior::Obf { inclusion } => {
                if size != 1 {
                    return Ok(f64::NEG_INFINITY);
                }
                let p = inclusion[mask.trailing_zeros() as usize];
                Ok(match role {
                    Role::Good => p.ln(),
                    Role::Bad => (-p).ln_1p(),
                })
            }
            PartitionPrior::Explicit(_) => Err(ObfsError::UnsupportedPrior),
        }
    }

    /// Log of the constant that normalizes the product of block weights.
    pub(crate) fn log_normalizer(&self, n_features: usize) -> Result<f64> {
        match self {
            PartitionPrior::Uniform => Ok(-(labeled_partition_count(n_features) as f64).ln()),
            PartitionPrior::Obf { .. } => Ok(0.0),
            PartitionPrior::BlockSize { .. } => {
                let mut w = vec![f64::NEG_INFINITY; 1 << n_features];
                for mask in 1u32..1 << n_features {
                    let mut acc = LogSumExp::default();
                    acc.add(self.block_log_weight(mask, Role::Good)?);
                    acc.add(self.block_log_weight(mask, Role::Bad)?);
                    w[mask as usize] = acc.value();
                }
                Ok(-super::dp::log_partition_sum(n_features, &w))
            }
            PartitionPrior::Explicit(_) => Err(ObfsError::UnsupportedPrior),
        }
    }

    /// `ln π(P)`; `-inf` for partitions with zero mass.
    pub fn log_prior(&self, p: &FeaturePartition, n_features: usize) -> Result<f64> {
        validate(p, &FeatureSet::range(n_features))?;
        match self {
            PartitionPrior::Explicit(entries) => {
                let total: f64 = entries.iter().map(|(_, w)| w).sum();
                if total <= 0.0 {
                    return Err(ObfsError::ZeroPriorMass);
                }
                let w: f64 = entries.iter().filter(|(q, _)| q == p).map(|(_, w)| w).sum();
                Ok((w / total).ln())
            }
            _ => {
                let mut lp = self.log_normalizer(n_features)?;
                for (role, block) in p.blocks() {
                    let mask = block.iter().fold(0u32, |m, f| m | 1 << f);
                    lp += self.block_log_weight(mask, role)?;
                }
                Ok(lp)
            }
        }
    }
}

/// Per-partition log prior evaluated inside the enumeration loop.
pub(crate) enum PriorEval {
    Factorized {
        constant: f64,
        good: Vec<f64>,
        bad: Vec<f64>,
    },
    Table {
        constant: f64,
        masses: HashMap<PartitionCode, f64>,
    },
}

impl PriorEval {
    pub(crate) fn new(prior: &PartitionPrior, n_features: usize) -> Result<Self> {
        prior.validate(n_features)?;
        match prior {
            PartitionPrior::Explicit(entries) => {
                let mut masses: HashMap<PartitionCode, f64> = HashMap::new();
                let mut total = 0.0;
                for (p, w) in entries {
                    let code = PartitionCode::from_partition(p, n_features).ok_or(
                        ObfsError::CapExceeded {
                            size: n_features,
                            cap: crate::partition::MAX_CODED_FEATURES,
                        },
                    )?;
                    *masses.entry(code).or_default() += w;
                    total += w;
                }
                if total <= 0.0 {
                    return Err(ObfsError::ZeroPriorMass);
                }
                Ok(PriorEval::Table {
                    constant: -total.ln(),
                    masses: masses.into_iter().map(|(c, w)| (c, w.ln())).collect(),
                })
            }
            _ => {
                let mut good = vec![f64::NEG_INFINITY; 1 << n_features];
                let mut bad = vec![f64::NEG_INFINITY; 1 << n_features];
                for mask in 1u32..1 << n_features {
                    good[mask as usize] = prior.block_log_weight(mask, Role::Good)?;
                    bad[mask as usize] = prior.block_log_weight(mask, Role::Bad)?;
                }
                Ok(PriorEval::Factorized {
                    constant: prior.log_normalizer(n_features)?,
                    good,
                    bad,
                })
            }
        }
    }
}
