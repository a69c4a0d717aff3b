//! Labeled samples and their sufficient statistics.
//!
//! Means and unbiased covariances are accumulated once over the full
//! feature set, per class and pooled; per-subset statistics are slices of
//! those, so restricting to `A ⊆ B` gives exactly the `A` sub-block of `B`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{ObfsError, Result};
use crate::partition::FeatureSet;
use crate::truth::GroundTruthModel;

/// Observations over a fixed feature set, each with a 0/1 class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledSample {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(ObfsError::InvalidSample(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let d = names.len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(ObfsError::InvalidSample(format!(
                    "row {i} has {} values, expected {d}",
                    row.len()
                )));
            }
            values.extend(row);
        }
        Self::from_flat(names, values, labels)
    }

    /// Row-major `values` of length `labels.len() * names.len()`.
    pub fn from_flat(names: Vec<String>, values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if names.is_empty() {
            return Err(ObfsError::InvalidSample("no features".into()));
        }
        if values.len() != labels.len() * names.len() {
            return Err(ObfsError::InvalidSample(
                "value count does not match shape".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ObfsError::InvalidSample(format!(
                "non-finite value in row {}",
                i / names.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(ObfsError::InvalidSample(format!(
                "label of row {i} is not 0 or 1"
            )));
        }
        Ok(LabeledSample {
            names,
            values,
            labels,
        })
    }

    /// Empty sample over `n_features` features named `f0, f1, ...`.
    pub fn empty(n_features: usize) -> Self {
        LabeledSample {
            names: default_names(n_features),
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn n_class(&self, y: u8) -> usize {
        self.labels.iter().filter(|&&l| l == y).count()
    }

    /// `n_0 / n`, or `None` for an empty sample.
    pub fn rho(&self) -> Option<f64> {
        (self.n() > 0).then(|| self.n_class(0) as f64 / self.n() as f64)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// The first `n` observations.
    pub fn prefix(&self, n: usize) -> LabeledSample {
        let n = n.min(self.n());
        LabeledSample {
            names: self.names.clone(),
            values: self.values[..n * self.n_features()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Moves feature `f` to position `map[f]`.
    pub fn permute_features(&self, map: &[usize]) -> LabeledSample {
        let d = self.n_features();
        let mut names = vec![String::new(); d];
        for (f, name) in self.names.iter().enumerate() {
            names[map[f]] = name.clone();
        }
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.n() {
            for f in 0..d {
                values[i * d + map[f]] = self.values[i * d + f];
            }
        }
        LabeledSample {
            names,
            values,
            labels: self.labels.clone(),
        }
    }

    /// Reads a header row of feature names plus a `label` column, then one
    /// observation per row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let csv_err = |e: csv::Error| ObfsError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        };
        let header = rdr.headers().map_err(csv_err)?.clone();
        let label_col = header
            .iter()
            .position(|h| h.trim() == "label")
            .ok_or_else(|| ObfsError::Csv {
                line: 1,
                message: "header has no `label` column".into(),
            })?;
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_col)
            .map(|(_, h)| h.trim().to_string())
            .collect();
        if names.is_empty() {
            return Err(ObfsError::Csv {
                line: 1,
                message: "header has no feature columns".into(),
            });
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map_or(0, |p| p.line());
            for (i, field) in record.iter().enumerate() {
                let field = field.trim();
                if i == label_col {
                    labels.push(match field {
                        "0" => 0,
                        "1" => 1,
                        _ => {
                            return Err(ObfsError::Csv {
                                line,
                                message: format!("label `{field}` is not 0 or 1"),
                            })
                        }
                    });
                } else {
                    let v: f64 = field.parse().map_err(|_| ObfsError::Csv {
                        line,
                        message: format!("`{field}` in column `{}` is not a number", &header[i]),
                    })?;
                    if !v.is_finite() {
                        return Err(ObfsError::Csv {
                            line,
                            message: format!("non-finite value in column `{}`", &header[i]),
                        });
                    }
                    values.push(v);
                }
            }
        }
        Self::from_flat(names, values, labels)
    }

    /// Writes feature columns followed by `label`.
    pub fn to_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

pub fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

/// Which observations a statistic is taken over.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Class0,
    Class1,
    Pooled,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Class0, Scope::Class1, Scope::Pooled];
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::Class0 => "class0",
            Scope::Class1 => "class1",
            Scope::Pooled => "pooled",
        })
    }
}

/// Count, mean and unbiased covariance of one group of observations.
/// The mean is absent for an empty group and the covariance for fewer than
/// two observations.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStats {
    pub count: usize,
    pub mean: Option<DVector<f64>>,
    pub cov: Option<DMatrix<f64>>,
}

/// Statistics of one feature subset.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetStats {
    pub subset: FeatureSet,
    pub class: [GroupStats; 2],
    pub pooled: GroupStats,
}

impl SubsetStats {
    pub fn group(&self, scope: Scope) -> &GroupStats {
        match scope {
            Scope::Class0 => &self.class[0],
            Scope::Class1 => &self.class[1],
            Scope::Pooled => &self.pooled,
        }
    }

    pub fn n(&self) -> usize {
        self.pooled.count
    }
}

/// Single-pass mean and co-moment accumulator.
#[derive(Clone, Debug)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments {
            count: 0,
            mean: vec![0.0; d],
            comoment: vec![0.0; d * d],
        }
    }

    fn push(&mut self, x: &[f64], delta: &mut [f64]) {
        let d = self.mean.len();
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for i in 0..d {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] * inv;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            for j in 0..=i {
                self.comoment[i * d + j] += after * delta[j];
            }
        }
    }

    fn finish(&self) -> GroupStats {
        let d = self.mean.len();
        let mean = (self.count > 0).then(|| DVector::from_column_slice(&self.mean));
        let cov = (self.count > 1).then(|| {
            let denom = (self.count - 1) as f64;
            DMatrix::from_fn(d, d, |i, j| {
                let (a, b) = if i >= j { (i, j) } else { (j, i) };
                self.comoment[a * d + b] / denom
            })
        });
        GroupStats {
            count: self.count,
            mean,
            cov,
        }
    }
}

/// Statistics over the full feature set, from which subsets are sliced.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStats {
    n_features: usize,
    class: [GroupStats; 2],
    pooled: GroupStats,
}

impl SampleStats {
    pub fn compute(sample: &LabeledSample) -> Self {
        let d = sample.n_features();
        let mut class = [Moments::new(d), Moments::new(d)];
        let mut pooled = Moments::new(d);
        let mut delta = vec![0.0; d];
        for i in 0..sample.n() {
            let x = sample.row(i);
            class[sample.label(i) as usize].push(x, &mut delta);
            pooled.push(x, &mut delta);
        }
        SampleStats {
            n_features: d,
            class: [class[0].finish(), class[1].finish()],
            pooled: pooled.finish(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn group(&self, scope: Scope) -> &GroupStats {
        match scope {
            Scope::Class0 => &self.class[0],
            Scope::Class1 => &self.class[1],
            Scope::Pooled => &self.pooled,
        }
    }

    fn check_subset(&self, subset: &FeatureSet) -> Result<()> {
        if subset.is_empty() {
            return Err(ObfsError::EmptySubset);
        }
        match subset.max() {
            Some(f) if f >= self.n_features => Err(ObfsError::FeatureOutOfRange {
                feature: f,
                n_features: self.n_features,
            }),
            _ => Ok(()),
        }
    }

    pub fn subset(&self, subset: &FeatureSet) -> Result<SubsetStats> {
        self.check_subset(subset)?;
        let idx = subset.as_slice();
        let slice = |g: &GroupStats| GroupStats {
            count: g.count,
            mean: g.mean.as_ref().map(|m| m.select_rows(idx)),
            cov: g
                .cov
                .as_ref()
                .map(|c| c.select_rows(idx).select_columns(idx)),
        };
        Ok(SubsetStats {
            subset: subset.clone(),
            class: [slice(&self.class[0]), slice(&self.class[1])],
            pooled: slice(&self.pooled),
        })
    }

    /// Like [`SampleStats::subset`] for a bitmask over features `0..32`.
    pub(crate) fn subset_mask(&self, mask: u32) -> Result<SubsetStats> {
        self.subset(&FeatureSet::from_mask(mask as u64))
    }
}

/// Means and unbiased covariances of `subset`, per class and pooled.
pub fn compute_stats(sample: &LabeledSample, subset: &FeatureSet) -> Result<SubsetStats> {
    SampleStats::compute(sample).subset(subset)
}

/// Lower Cholesky factor of a symmetric matrix; reports the first pivot
/// that is not strictly positive.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "cholesky of a non-square matrix");
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(ObfsError::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// `ln |M|` of a symmetric positive-definite matrix.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `ρΣ_0 + (1-ρ)Σ_1 + ρ(1-ρ)(μ_0-μ_1)(μ_0-μ_1)ᵀ` restricted to `subset`: the
/// covariance the pooled sample covariance tracks when a fraction `rho` of
/// points are class 0.
pub fn mixture_sigma_n(
    truth: &GroundTruthModel,
    subset: &FeatureSet,
    rho: f64,
) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(ObfsError::InvalidModel(format!(
            "rho = {rho} outside [0, 1]"
        )));
    }
    let (m0, s0) = truth.moments(0, subset)?;
    let (m1, s1) = truth.moments(1, subset)?;
    let d = &m0 - &m1;
    Ok(s0 * rho + s1 * (1.0 - rho) + &d * d.transpose() * (rho * (1.0 - rho)))
}
