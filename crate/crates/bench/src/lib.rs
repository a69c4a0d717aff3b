//! Fixtures shared by the benchmarks.

use obfs_core::truth::{ClassSpec, ScenarioSpec};
use obfs_core::{GroundTruthModel, LabeledSample, SamplingScheme};

/// `k` features in correlated pairs; feature 0 shifts its mean and the
/// last feature changes its variance.
pub fn bench_model(k: usize) -> GroundTruthModel {
    let pairs: Vec<(usize, usize, f64)> = (0..k.saturating_sub(1))
        .step_by(2)
        .map(|i| (i, i + 1, 0.4))
        .collect();
    let mut mean0 = vec![0.0; k];
    mean0[0] = 1.0;
    let mut diag1 = vec![1.0; k];
    diag1[k - 1] = 2.0;
    let class = |mean, diagonal| ClassSpec {
        mean,
        covariance: None,
        diagonal: Some(diagonal),
        off_diagonal: pairs.clone(),
    };
    GroundTruthModel::from_spec(&ScenarioSpec {
        features: k,
        class0_prob: 0.5,
        class0: class(mean0, vec![1.0; k]),
        class1: class(vec![0.0; k], diag1),
    })
    .expect("bench model is valid")
}

pub fn bench_sample(k: usize, n: usize) -> LabeledSample {
    bench_model(k).sample(n, 7, SamplingScheme::Random)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let s = bench_sample(5, 40);
        assert_eq!((s.n(), s.n_features()), (40, 5));
    }
}
