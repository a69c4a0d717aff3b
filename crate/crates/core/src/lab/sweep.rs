//! Posterior trajectories along growing prefixes of one sample path.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ObfsError, Result};
use crate::partition::{PartitionCode, DEFAULT_PARTITION_CAP};
use crate::posterior::{
    posterior_table_from_scores, HyperparamPolicy, PartitionPrior, PosteriorTable, ScoreTable,
};
use crate::stats::SampleStats;
use crate::truth::{
    derive_unambiguous_partition, GroundTruthModel, SamplingScheme, TruthPartition,
};

/// Kinds of partitions other than the true one, by how fast their posterior
/// ratio to the true partition is expected to vanish.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionClass {
    /// The true partition itself.
    Truth,
    /// Labels a truly good feature bad, or splits a correlated pair across
    /// blocks: the ratio decays geometrically in `n`.
    Exponential,
    /// Every other partition: the ratio decays at least like a power of `n`.
    Polynomial,
}

impl PartitionClass {
    pub fn name(self) -> &'static str {
        match self {
            PartitionClass::Truth => "truth",
            PartitionClass::Exponential => "exponential",
            PartitionClass::Polynomial => "polynomial",
        }
    }
}

/// Classifies the partition `code` relative to `truth`; `edges` are the
/// correlated feature pairs of the model.
pub fn classify_partition(
    code: PartitionCode,
    n_features: usize,
    truth: &TruthPartition,
    edges: &[(usize, usize)],
) -> PartitionClass {
    let p = code.decode(n_features);
    if p == truth.partition {
        return PartitionClass::Truth;
    }
    let good = p.good_union();
    if !truth.good_set.is_subset(&good) {
        return PartitionClass::Exponential;
    }
    let (masks, _) = code.masks(n_features);
    let split = edges
        .iter()
        .any(|&(i, j)| masks.iter().any(|&m| (m >> i & 1) != (m >> j & 1)));
    if split {
        PartitionClass::Exponential
    } else {
        PartitionClass::Polynomial
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    /// Strictly ascending sample sizes; 0 is allowed.
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    /// Replicate `r` uses seed `seed + r`.
    pub seed: u64,
    pub scheme: SamplingScheme,
    pub cap: usize,
    /// Moment-equality tolerance used to derive the true partition.
    pub tol: f64,
}

impl SweepConfig {
    pub fn new(n_grid: Vec<usize>, replicates: usize, seed: u64) -> Self {
        SweepConfig {
            n_grid,
            replicates,
            seed,
            scheme: SamplingScheme::Random,
            cap: DEFAULT_PARTITION_CAP,
            tol: crate::truth::DEFAULT_TOL,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64)
            .map(|r| self.seed.wrapping_add(r))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(ObfsError::InvalidExperiment("n_grid is empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ObfsError::InvalidExperiment(
                "n_grid must be strictly ascending".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(ObfsError::InvalidExperiment(
                "replicates must be at least 1".into(),
            ));
        }
        if let SamplingScheme::Separate(rho) = self.scheme {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(ObfsError::InvalidExperiment(format!(
                    "class-0 proportion {rho} must lie strictly inside (0, 1)"
                )));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(ObfsError::InvalidExperiment(
                "tol must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Posterior summary at one `(seed, n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub seed: u64,
    pub n: usize,
    pub log_z: f64,
    /// `π*(P̄)`
    pub prob_truth: f64,
    pub log_prob_truth: f64,
    /// `π*(Ḡ)`
    pub prob_good_set: f64,
    /// 1 for the most probable partition; ties share the better rank.
    pub rank_truth: usize,
    /// Sum of all normalized partition probabilities.
    pub prob_sum: f64,
    /// `π*(f)` by feature index.
    pub marginals: Vec<f64>,
    pub log_marginals: Vec<f64>,
    /// `ln(1 - π*(f))`
    pub log_complements: Vec<f64>,
    /// Largest `ln π*(P)/π*(P̄)` over the exponential class, if non-empty.
    pub max_log_ratio_exponential: Option<f64>,
    pub max_log_ratio_polynomial: Option<f64>,
    /// Wall time of the evaluation in seconds. Not part of the written
    /// primary outputs, which stay reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub feature_names: Vec<String>,
    pub truth_partition: String,
    pub good_set: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Sorted by `(seed, n)`.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Points of one replicate in grid order.
    pub fn path(&self, seed: u64) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.seed == seed).collect()
    }

    /// Long-format CSV: `seed,n,quantity,value`.
    pub fn write_tidy_csv<W: Write>(&self, writer: W) -> Result<()> {
        let err = |e: csv::Error| ObfsError::InvalidExperiment(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["seed", "n", "quantity", "value"])
            .map_err(err)?;
        for p in &self.points {
            let mut row = |q: &str, v: f64| {
                w.write_record([
                    p.seed.to_string(),
                    p.n.to_string(),
                    q.to_string(),
                    format!("{v:?}"),
                ])
            };
            row("log_Z", p.log_z).map_err(err)?;
            row("prob_truth", p.prob_truth).map_err(err)?;
            row("log_prob_truth", p.log_prob_truth).map_err(err)?;
            row("prob_good_set", p.prob_good_set).map_err(err)?;
            row("rank_truth", p.rank_truth as f64).map_err(err)?;
            row("prob_sum", p.prob_sum).map_err(err)?;
            for (f, name) in self.feature_names.iter().enumerate() {
                row(&format!("marginal[{name}]"), p.marginals[f]).map_err(err)?;
                row(&format!("log_marginal[{name}]"), p.log_marginals[f]).map_err(err)?;
                row(&format!("log_complement[{name}]"), p.log_complements[f]).map_err(err)?;
            }
            if let Some(v) = p.max_log_ratio_exponential {
                row("max_log_ratio_exponential", v).map_err(err)?;
            }
            if let Some(v) = p.max_log_ratio_polynomial {
                row("max_log_ratio_polynomial", v).map_err(err)?;
            }
        }
        w.flush()
            .map_err(|e| ObfsError::InvalidExperiment(format!("writing CSV: {e}")))?;
        Ok(())
    }

    /// `seed,n,runtime_secs`
    pub fn write_timings_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "seed,n,runtime_secs")?;
        for p in &self.points {
            writeln!(writer, "{},{},{:?}", p.seed, p.n, p.runtime_secs)?;
        }
        Ok(())
    }
}

fn summarize(
    table: &PosteriorTable,
    classes: &[PartitionClass],
    truth_idx: usize,
    truth: &TruthPartition,
) -> (f64, usize, f64, Option<f64>, Option<f64>) {
    let entries: Vec<f64> = table.iter().map(|(_, l, _)| l).collect();
    let truth_log = entries[truth_idx];
    let rank = 1 + entries.iter().filter(|&&l| l > truth_log).count();
    let mut max_exp: Option<f64> = None;
    let mut max_poly: Option<f64> = None;
    for (&l, &c) in entries.iter().zip(classes) {
        let slot = match c {
            PartitionClass::Truth => continue,
            PartitionClass::Exponential => &mut max_exp,
            PartitionClass::Polynomial => &mut max_poly,
        };
        let r = l - truth_log;
        *slot = Some(slot.map_or(r, |m: f64| m.max(r)));
    }
    (
        table.marginal_good_set(&truth.good_set),
        rank,
        truth_log - table.log_z(),
        max_exp,
        max_poly,
    )
}

/// Evaluates the exact posterior along each replicate's sample path.
///
/// Replicate `r` draws one sample of the largest grid size from seed
/// `seed + r`; the sample at each grid point is its prefix. Replicates and
/// grid points run in parallel, and the output order is fixed.
pub fn run_sweep(
    truth: &GroundTruthModel,
    policy: &HyperparamPolicy,
    prior: &PartitionPrior,
    config: &SweepConfig,
) -> Result<SweepResult> {
    config.validate()?;
    let n_features = truth.n_features();
    let cap = config.cap.min(crate::partition::MAX_CODED_FEATURES);
    if n_features > cap {
        return Err(ObfsError::CapExceeded {
            size: n_features,
            cap,
        });
    }
    if policy.n_features() != n_features {
        return Err(ObfsError::InvalidExperiment(format!(
            "policy covers {} features, model has {n_features}",
            policy.n_features()
        )));
    }
    let tp = derive_unambiguous_partition(truth, config.tol);
    let truth_code = PartitionCode::from_partition(&tp.partition, n_features)
        .expect("derived partition covers the model's features");
    let edges = truth.correlation_edges(config.tol);
    let n_max = *config.n_grid.last().expect("validated non-empty");

    struct Layout {
        classes: Vec<PartitionClass>,
        truth_idx: usize,
    }
    let layout = std::sync::OnceLock::<Layout>::new();

    let seeds = config.seeds();
    let per_seed: Vec<Vec<SweepPoint>> = seeds
        .par_iter()
        .map(|&seed| {
            let full = truth.sample(n_max, seed, config.scheme);
            config
                .n_grid
                .par_iter()
                .map(|&n| {
                    let wrap = |e: ObfsError| ObfsError::Experiment {
                        n,
                        seed,
                        source: Box::new(e),
                    };
                    let start = Instant::now();
                    let sample = full.prefix(n);
                    let scores =
                        ScoreTable::build(&SampleStats::compute(&sample), policy).map_err(wrap)?;
                    let table = posterior_table_from_scores(&scores, prior, cap).map_err(wrap)?;
                    let lay = layout.get_or_init(|| {
                        let codes: Vec<PartitionCode> = table.iter().map(|(c, _, _)| c).collect();
                        Layout {
                            classes: codes
                                .iter()
                                .map(|&c| classify_partition(c, n_features, &tp, &edges))
                                .collect(),
                            truth_idx: codes
                                .iter()
                                .position(|&c| c == truth_code)
                                .expect("every partition is enumerated"),
                        }
                    });
                    let (prob_good_set, rank_truth, log_prob_truth, max_exp, max_poly) =
                        summarize(&table, &lay.classes, lay.truth_idx, &tp);
                    Ok(SweepPoint {
                        seed,
                        n,
                        log_z: table.log_z(),
                        prob_truth: log_prob_truth.exp(),
                        log_prob_truth,
                        prob_good_set,
                        rank_truth,
                        prob_sum: table.probability_sum(),
                        marginals: table.marginals_f(),
                        log_marginals: (0..n_features).map(|f| table.log_marginal_f(f)).collect(),
                        log_complements: (0..n_features)
                            .map(|f| table.log_complement_f(f))
                            .collect(),
                        max_log_ratio_exponential: max_exp,
                        max_log_ratio_polynomial: max_poly,
                        runtime_secs: start.elapsed().as_secs_f64(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points: Vec<SweepPoint> = per_seed.into_iter().flatten().collect();
    points.sort_by_key(|p| (p.seed, p.n));
    Ok(SweepResult {
        feature_names: crate::stats::default_names(n_features),
        truth_partition: tp.partition.to_string(),
        good_set: tp.good_set.as_slice().to_vec(),
        n_grid: config.n_grid.clone(),
        seeds,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::FeaturePartition;
    use crate::truth::scenario;

    #[test]
    fn classes_follow_truth() {
        let sc = scenario("b").unwrap();
        let tp = derive_unambiguous_partition(&sc.model, 1e-12);
        let edges = sc.model.correlation_edges(1e-12);
        let class = |s: &str| {
            let p: FeaturePartition = s.parse().unwrap();
            classify_partition(
                PartitionCode::from_partition(&p, 3).unwrap(),
                3,
                &tp,
                &edges,
            )
        };
        assert_eq!(class("G:{0,1};B:{2}"), PartitionClass::Truth);
        assert_eq!(class("G:{0}|G:{1};B:{2}"), PartitionClass::Exponential);
        assert_eq!(class("G:{1};B:{0}|B:{2}"), PartitionClass::Exponential);
        assert_eq!(class("G:{0,1,2};"), PartitionClass::Polynomial);
        assert_eq!(class("G:{0,1}|G:{2};"), PartitionClass::Polynomial);
    }

    #[test]
    fn zero_data_entry_is_the_prior() {
        let sc = scenario("a").unwrap();
        let policy = HyperparamPolicy::new(3);
        let r = run_sweep(
            &sc.model,
            &policy,
            &PartitionPrior::Uniform,
            &SweepConfig::new(vec![0, 10], 2, 5),
        )
        .unwrap();
        assert_eq!(r.points.len(), 4);
        for p in r.points.iter().filter(|p| p.n == 0) {
            assert!((p.prob_truth - 1.0 / 22.0).abs() < 1e-12);
        }
        assert_eq!(r.truth_partition, "G:{0};B:{1}|B:{2}");
    }

    #[test]
    fn grids_are_validated() {
        let sc = scenario("a").unwrap();
        let policy = HyperparamPolicy::new(3);
        for cfg in [
            SweepConfig::new(vec![], 1, 0),
            SweepConfig::new(vec![5, 5], 1, 0),
            SweepConfig::new(vec![5], 0, 0),
        ] {
            let e = run_sweep(&sc.model, &policy, &PartitionPrior::Uniform, &cfg).unwrap_err();
            assert!(matches!(e, ObfsError::InvalidExperiment(_)));
        }
    }
}
