//! Ground-truth Gaussian block models.
//!
//! A model fixes class-conditional means and covariances over the full
//! feature set. From it we derive the unambiguous feature partition (blocks
//! are connected components of the correlation graph; a block is good when
//! its moments differ between classes) and draw labeled samples.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ObfsError, Result};
use crate::partition::{FeaturePartition, FeatureSet};
use crate::stats::{cholesky, default_names, LabeledSample};

/// Default cutoff below which a covariance or moment difference counts as zero.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Class-conditional Gaussian model over `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthModel {
    means: [DVector<f64>; 2],
    covs: [DMatrix<f64>; 2],
    chol: [DMatrix<f64>; 2],
    class0_prob: f64,
}

impl GroundTruthModel {
    pub fn new(
        means: [DVector<f64>; 2],
        covs: [DMatrix<f64>; 2],
        class0_prob: f64,
    ) -> Result<Self> {
        let d = means[0].len();
        if d == 0 {
            return Err(ObfsError::InvalidModel("no features".into()));
        }
        if !(class0_prob > 0.0 && class0_prob < 1.0) {
            return Err(ObfsError::InvalidModel(format!(
                "class-0 probability {class0_prob} must lie in (0, 1)"
            )));
        }
        for y in 0..2 {
            if means[y].len() != d || covs[y].shape() != (d, d) {
                return Err(ObfsError::InvalidModel(format!(
                    "class {y} moments do not match {d} features"
                )));
            }
            let c = &covs[y];
            for i in 0..d {
                for j in 0..i {
                    if c[(i, j)] != c[(j, i)] {
                        return Err(ObfsError::InvalidModel(format!(
                            "class {y} covariance is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        let chol = [
            cholesky(&covs[0])
                .map_err(|e| ObfsError::InvalidModel(format!("class 0 covariance: {e}")))?,
            cholesky(&covs[1])
                .map_err(|e| ObfsError::InvalidModel(format!("class 1 covariance: {e}")))?,
        ];
        Ok(GroundTruthModel {
            means,
            covs,
            chol,
            class0_prob,
        })
    }

    pub fn n_features(&self) -> usize {
        self.means[0].len()
    }

    pub fn class0_prob(&self) -> f64 {
        self.class0_prob
    }

    pub fn mean(&self, y: u8) -> &DVector<f64> {
        &self.means[y as usize]
    }

    pub fn cov(&self, y: u8) -> &DMatrix<f64> {
        &self.covs[y as usize]
    }

    /// Mean and covariance of class `y` restricted to `subset`.
    pub fn moments(&self, y: u8, subset: &FeatureSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if subset.is_empty() {
            return Err(ObfsError::EmptySubset);
        }
        if let Some(f) = subset.max().filter(|&f| f >= self.n_features()) {
            return Err(ObfsError::FeatureOutOfRange {
                feature: f,
                n_features: self.n_features(),
            });
        }
        let idx = subset.as_slice();
        let y = y as usize;
        Ok((
            self.means[y].select_rows(idx),
            self.covs[y].select_rows(idx).select_columns(idx),
        ))
    }

    /// Pairs `(i, j)`, `i < j`, correlated in at least one class.
    pub fn correlation_edges(&self, tol: f64) -> Vec<(usize, usize)> {
        let d = self.n_features();
        let mut edges = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if self.covs[0][(i, j)].abs() > tol || self.covs[1][(i, j)].abs() > tol {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// Reorders features so feature `f` becomes `map[f]`.
    pub fn permute_features(&self, map: &[usize]) -> Result<Self> {
        let d = self.n_features();
        let mut inv = vec![0; d];
        for (f, &t) in map.iter().enumerate() {
            inv[t] = f;
        }
        let mean = |y: usize| DVector::from_fn(d, |i, _| self.means[y][inv[i]]);
        let cov = |y: usize| DMatrix::from_fn(d, d, |i, j| self.covs[y][(inv[i], inv[j])]);
        GroundTruthModel::new([mean(0), mean(1)], [cov(0), cov(1)], self.class0_prob)
    }

    /// Draws `n` labeled points.
    ///
    /// Under [`SamplingScheme::Random`] each row draws its label and then its
    /// features from one stream, so `sample(m, seed)` is a prefix of
    /// `sample(n, seed)` for `m < n`.
    pub fn sample(&self, n: usize, seed: u64, scheme: SamplingScheme) -> LabeledSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = match scheme {
            SamplingScheme::Random => Vec::new(),
            SamplingScheme::Separate(rho) => {
                let n0 = (rho.clamp(0.0, 1.0) * n as f64).round() as usize;
                let mut l: Vec<u8> = (0..n).map(|i| u8::from(i >= n0)).collect();
                // Fisher-Yates so class order carries no information.
                for i in (1..n).rev() {
                    let j = rng.random_range(0..=i);
                    l.swap(i, j);
                }
                l
            }
        };
        let d = self.n_features();
        let mut values = Vec::with_capacity(n * d);
        let mut out_labels = Vec::with_capacity(n);
        let mut z = DVector::<f64>::zeros(d);
        for i in 0..n {
            let y = match scheme {
                SamplingScheme::Random => u8::from(rng.random::<f64>() >= self.class0_prob),
                SamplingScheme::Separate(_) => labels[i],
            };
            for k in 0..d {
                z[k] = rng.sample(StandardNormal);
            }
            let x = &self.means[y as usize] + &self.chol[y as usize] * &z;
            values.extend(x.iter());
            out_labels.push(y);
        }
        LabeledSample::from_flat(default_names(d), values, out_labels)
            .expect("sampled values are finite")
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self> {
        let d = spec.features;
        let build = |c: &ClassSpec, y: usize| -> Result<(DVector<f64>, DMatrix<f64>)> {
            if c.mean.len() != d {
                return Err(ObfsError::InvalidModel(format!(
                    "class {y} mean has {} entries, expected {d}",
                    c.mean.len()
                )));
            }
            let cov = match (&c.covariance, &c.diagonal) {
                (Some(_), Some(_)) => {
                    return Err(ObfsError::InvalidModel(format!(
                        "class {y}: give either `covariance` or `diagonal`, not both"
                    )))
                }
                (Some(rows), None) => {
                    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                        return Err(ObfsError::InvalidModel(format!(
                            "class {y} covariance is not {d}x{d}"
                        )));
                    }
                    DMatrix::from_fn(d, d, |i, j| rows[i][j])
                }
                (None, Some(diag)) => {
                    if diag.len() != d {
                        return Err(ObfsError::InvalidModel(format!(
                            "class {y} diagonal has {} entries, expected {d}",
                            diag.len()
                        )));
                    }
                    let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
                    for &(i, j, v) in &c.off_diagonal {
                        if i >= d || j >= d || i == j {
                            return Err(ObfsError::InvalidModel(format!(
                                "class {y}: bad off-diagonal pair ({i}, {j})"
                            )));
                        }
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                    m
                }
                (None, None) => {
                    return Err(ObfsError::InvalidModel(format!(
                        "class {y} needs `covariance` or `diagonal`"
                    )))
                }
            };
            Ok((DVector::from_column_slice(&c.mean), cov))
        };
        let (m0, c0) = build(&spec.class0, 0)?;
        let (m1, c1) = build(&spec.class1, 1)?;
        GroundTruthModel::new([m0, m1], [c0, c1], spec.class0_prob)
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            toml::from_str(src).map_err(|e| ObfsError::InvalidModel(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ObfsError::InvalidModel(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    /// Scenario file describing this model with dense covariances.
    pub fn to_spec(&self) -> ScenarioSpec {
        let d = self.n_features();
        let class = |y: usize| ClassSpec {
            mean: self.means[y].iter().copied().collect(),
            covariance: Some(
                (0..d)
                    .map(|i| (0..d).map(|j| self.covs[y][(i, j)]).collect())
                    .collect(),
            ),
            diagonal: None,
            off_diagonal: Vec::new(),
        };
        ScenarioSpec {
            features: d,
            class0_prob: self.class0_prob,
            class0: class(0),
            class1: class(1),
        }
    }
}

/// How class labels are assigned when sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingScheme {
    /// Labels i.i.d. with `P(y = 0)` from the model.
    Random,
    /// Exactly `round(ρ n)` class-0 points, in shuffled order.
    Separate(f64),
}

/// On-disk scenario description (TOML).
///
/// ```toml
/// features = 2
/// class0_prob = 0.5
/// [class0]
/// mean = [1.0, 0.0]
/// diagonal = [1.0, 1.0]
/// off_diagonal = [[0, 1, 0.5]]   # (i, j, covariance)
/// [class1]
/// mean = [0.0, 0.0]
/// covariance = [[1.0, 0.5], [0.5, 1.0]]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub features: usize,
    #[serde(default = "half")]
    pub class0_prob: f64,
    pub class0: ClassSpec,
    pub class1: ClassSpec,
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub off_diagonal: Vec<(usize, usize, f64)>,
}

/// The unambiguous partition and the good set it induces.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthPartition {
    pub partition: FeaturePartition,
    pub good_set: FeatureSet,
}

fn components(d: usize, edges: &[(usize, usize)]) -> Vec<FeatureSet> {
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut x = x;
        while parent[x] != r {
            let next = parent[x];
            parent[x] = r;
            x = next;
        }
        r
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); d];
    for f in 0..d {
        let r = find(&mut parent, f);
        groups[r].push(f);
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(FeatureSet::new)
        .collect()
}

/// Blocks are the connected components of the graph joining features whose
/// covariance exceeds `tol` in either class; a component is good when its
/// means or covariances differ between classes by more than `tol`.
pub fn derive_unambiguous_partition(truth: &GroundTruthModel, tol: f64) -> TruthPartition {
    let d = truth.n_features();
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for block in components(d, &truth.correlation_edges(tol)) {
        let idx = block.as_slice();
        let mean_diff = idx
            .iter()
            .any(|&i| (truth.means[0][i] - truth.means[1][i]).abs() > tol);
        let cov_diff = idx.iter().any(|&i| {
            idx.iter()
                .any(|&j| (truth.covs[0][(i, j)] - truth.covs[1][(i, j)]).abs() > tol)
        });
        if mean_diff || cov_diff {
            good.push(block);
        } else {
            bad.push(block);
        }
    }
    let partition = FeaturePartition::new(good, bad);
    TruthPartition {
        good_set: partition.good_union(),
        partition,
    }
}

/// Features whose marginal mean or variance differs between classes.
pub fn derive_independent_unambiguous_set(truth: &GroundTruthModel, tol: f64) -> FeatureSet {
    (0..truth.n_features())
        .filter(|&f| {
            (truth.means[0][f] - truth.means[1][f]).abs() > tol
                || (truth.covs[0][(f, f)] - truth.covs[1][(f, f)]).abs() > tol
        })
        .collect()
}

/// A named fixture with its analytically known unambiguous partition.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub key: char,
    pub name: &'static str,
    pub description: &'static str,
    pub model: GroundTruthModel,
    pub expected: FeaturePartition,
}

fn vecf(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn correlated(d: usize, pairs: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(d, d);
    for &(i, j, v) in pairs {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// Fixtures covering each kind of feature the consistency result
/// distinguishes.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let mk = |means: [&[f64]; 2], covs: [DMatrix<f64>; 2]| {
        GroundTruthModel::new([vecf(means[0]), vecf(means[1])], covs, 0.5)
            .expect("builtin scenario is valid")
    };
    let lit = |s: &str| s.parse::<FeaturePartition>().expect("builtin literal");
    let pair = correlated(3, &[(0, 1, 0.5)]);
    let chain = correlated(4, &[(0, 1, 0.5), (1, 2, 0.5)]);
    vec![
        Scenario {
            key: 'a',
            name: "mean-shift",
            description: "feature 0 shifts its mean by 1.0; features 1, 2 are independent nulls",
            model: mk(
                [&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]],
                [DMatrix::identity(3, 3), DMatrix::identity(3, 3)],
            ),
            expected: lit("G:{0};B:{1}|B:{2}"),
        },
        Scenario {
            key: 'b',
            name: "correlated-good-pair",
            description: "features 0, 1 correlated 0.5; only feature 0 shifts its mean",
            model: mk(
                [&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]],
                [pair.clone(), pair.clone()],
            ),
            expected: lit("G:{0,1};B:{2}"),
        },
        Scenario {
            key: 'c',
            name: "variance-change",
            description: "feature 0 has variance 2 in class 0 and 1 in class 1",
            model: mk(
                [&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]],
                [
                    DMatrix::from_diagonal(&vecf(&[2.0, 1.0, 1.0])),
                    DMatrix::identity(3, 3),
                ],
            ),
            expected: lit("G:{0};B:{1}|B:{2}"),
        },
        Scenario {
            key: 'd',
            name: "correlated-bad-pair",
            description:
                "features 0, 1 correlated 0.5 and identical across classes; feature 2 shifts",
            model: mk([&[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]], [pair.clone(), pair]),
            expected: lit("G:{2};B:{0,1}"),
        },
        Scenario {
            key: 'e',
            name: "correlation-chain",
            description: "chain 0-1-2 with correlations 0.5; only feature 0 shifts; feature 3 null",
            model: mk(
                [&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0]],
                [chain.clone(), chain],
            ),
            expected: lit("G:{0,1,2};B:{3}"),
        },
    ]
}

/// Finds a builtin scenario by key (`a`..`e`) or name.
pub fn scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name || (name.len() == 1 && name.starts_with(s.key)))
}
