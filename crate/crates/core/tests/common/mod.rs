#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use obfs_core::stats::default_names;
use obfs_core::LabeledSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Correlated features with a random per-class shift and scale, random labels.
pub fn random_sample(n_features: usize, n: usize, seed: u64) -> LabeledSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix: Vec<Vec<f64>> = (0..n_features)
        .map(|_| {
            (0..n_features)
                .map(|_| rng.random_range(-0.6..0.6))
                .collect()
        })
        .collect();
    let shift: Vec<f64> = (0..n_features)
        .map(|_| rng.random_range(-0.8..0.8))
        .collect();
    let scale: Vec<f64> = (0..n_features)
        .map(|_| rng.random_range(0.7..1.4))
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y: u8 = rng.random_range(0..2);
        let z: Vec<f64> = (0..n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let row = (0..n_features)
            .map(|i| {
                let mut v = z[i] + (0..n_features).map(|j| mix[i][j] * z[j]).sum::<f64>();
                if y == 1 {
                    v = v * scale[i] + shift[i];
                }
                v
            })
            .collect();
        rows.push(row);
        labels.push(y);
    }
    LabeledSample::new(default_names(n_features), rows, labels).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = m.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[(0, j)] * cofactor_det(&minor)
        })
        .sum()
}

/// Two-pass mean and unbiased covariance of the rows `idx` of `sample`
/// restricted to `features`.
pub fn two_pass(
    sample: &LabeledSample,
    rows: &[usize],
    features: &[usize],
) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let d = features.len();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for &r in rows {
        for (k, &f) in features.iter().enumerate() {
            mean[k] += sample.row(r)[f];
        }
    }
    mean /= n;
    if rows.len() < 2 {
        return (mean, None);
    }
    let mut cov = DMatrix::zeros(d, d);
    for &r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] +=
                    (sample.row(r)[features[a]] - mean[a]) * (sample.row(r)[features[b]] - mean[b]);
            }
        }
    }
    (mean, Some(cov / (n - 1.0)))
}

pub fn rows_of(sample: &LabeledSample, class: Option<u8>) -> Vec<usize> {
    (0..sample.n())
        .filter(|&i| class.is_none_or(|y| sample.label(i) == y))
        .collect()
}
