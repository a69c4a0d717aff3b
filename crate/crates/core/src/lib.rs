//! Bayesian feature selection over labeled partitions of Gaussian features.
//!
//! A labeled partition splits the features into good blocks, whose joint
//! distribution differs between the two classes, and bad blocks, which are
//! independent of the class and of every other block. The posterior over
//! partitions, its good-set and per-feature marginals, and the independent
//! (singleton) special case are computed exactly.

pub mod error;
pub mod lab;
pub mod numeric;
pub mod partition;
pub mod posterior;
pub mod selection;
pub mod stats;
pub mod truth;

pub use error::{ObfsError, PartitionViolation, Result};
pub use partition::{FeaturePartition, FeatureSet, PartitionCode, Role};
pub use posterior::{
    posterior_marginals_dp, posterior_table_enumerate, DpMarginals, HyperparamPolicy,
    PartitionPrior, PosteriorTable,
};
pub use stats::{LabeledSample, SampleStats, Scope};
pub use truth::{GroundTruthModel, SamplingScheme, Scenario};
