use thiserror::Error;

use crate::partition::Role;

/// Errors raised by the feature-selection engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObfsError {
    #[error("invalid partition: {0}")]
    InvalidPartition(#[from] PartitionViolation),

    #[error("partitions are defined over different feature universes")]
    UniverseMismatch,

    #[error("feature count {size} exceeds the enumeration cap of {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("cannot parse partition literal `{literal}`: {message}")]
    PartitionSyntax { literal: String, message: String },

    #[error("subset is empty")]
    EmptySubset,

    #[error("feature {feature} is outside the {n_features}-feature sample")]
    FeatureOutOfRange { feature: usize, n_features: usize },

    #[error("matrix is not positive-definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("kappa* - |A| - 1 = {value} must be positive for a block of size {size}")]
    DegenerateKappa { size: usize, value: f64 },

    #[error("block {block} ({role}): {source}")]
    Block {
        block: String,
        role: Role,
        #[source]
        source: Box<ObfsError>,
    },

    #[error("prior assigns zero mass to every partition")]
    ZeroPriorMass,

    #[error("prior does not factorize over blocks; use enumeration")]
    UnsupportedPrior,

    #[error("score for feature {feature} is {value}, outside [0, 1]")]
    ScoreOutOfRange { feature: usize, value: f64 },

    #[error("marginal prior for feature {feature} is {value}, must lie strictly inside (0, 1)")]
    InvalidInclusionPrior { feature: usize, value: f64 },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("CSV input, line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("at n = {n}, replicate seed {seed}: {source}")]
    Experiment {
        n: usize,
        seed: u64,
        #[source]
        source: Box<ObfsError>,
    },
}

impl ObfsError {
    /// True for failures of numerical preconditions (non-SPD matrices,
    /// degenerate posterior degrees of freedom) rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            ObfsError::NotPositiveDefinite { .. } | ObfsError::DegenerateKappa { .. } => true,
            ObfsError::Block { source, .. } | ObfsError::Experiment { source, .. } => {
                source.is_numeric()
            }
            _ => false,
        }
    }
}

/// The first problem found when validating a partition against a universe.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionViolation {
    #[error("feature {feature} appears in more than one block")]
    Duplicate { feature: usize },
    #[error("feature {feature} is not covered by any block")]
    Missing { feature: usize },
    #[error("feature {feature} is not in the universe")]
    Foreign { feature: usize },
    #[error("{role} block {index} is empty")]
    EmptyBlock { role: Role, index: usize },
}

pub type Result<T, E = ObfsError> = std::result::Result<T, E>;
