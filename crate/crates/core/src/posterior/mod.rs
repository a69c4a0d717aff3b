//! Posterior over labeled feature partitions under Gaussian conjugate models.

mod dp;
mod hyper;
mod prior;
mod score;
mod table;

pub use dp::{dp_from_scores, posterior_marginals_dp, DpMarginals};
pub use hyper::{
    BlockHyperparams, HyperparamPolicy, PolicyConfig, DEFAULT_KAPPA_OFFSET, DEFAULT_NU_0,
};
pub use prior::PartitionPrior;
pub use score::{
    block_score, block_updates, BlockScore, BlockUpdate, ScoreTable, MAX_TABLE_FEATURES,
};
pub use table::{
    check_partition, log_posterior_unnorm, log_unnorm_from_scores, posterior_table_enumerate,
    posterior_table_enumerate_capped, posterior_table_from_scores, PosteriorTable,
};
