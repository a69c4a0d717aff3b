use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use obfs_core::lab::{fan_inequality_check, fit_rates, run_sweep, FitOptions, SweepConfig};
use obfs_core::posterior::{
    dp_from_scores, posterior_marginals_dp, posterior_table_enumerate_capped,
    posterior_table_from_scores, ScoreTable,
};
use obfs_core::selection::{cmnc_select, mnc_select, obf_scores, obf_select, SelectionResult};
use obfs_core::truth::{derive_unambiguous_partition, scenario, ClassSpec, ScenarioSpec};
use obfs_core::{
    FeaturePartition, FeatureSet, GroundTruthModel, HyperparamPolicy, LabeledSample,
    PartitionPrior, Role, SampleStats, SamplingScheme,
};
use serde_json::{json, Map, Value};

use crate::config::{PriorKind, RuleKind, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    write_text(path, &s)
}

/// Creates the output directory and records the effective config in it.
fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    Ok(dir)
}

fn load_sample(cfg: &RunConfig) -> Result<LabeledSample> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Input("an input CSV is required (--input)".into()))?;
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(LabeledSample::from_csv(BufReader::new(file))?)
}

fn load_model(cfg: &RunConfig) -> Result<GroundTruthModel> {
    let name = cfg
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::Input("a scenario is required (--scenario)".into()))?;
    if let Some(sc) = scenario(name) {
        return Ok(sc.model);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(CliError::Input(format!(
            "`{name}` is neither a builtin scenario (a-e) nor a scenario file"
        )));
    }
    Ok(GroundTruthModel::from_file(path)?)
}

fn build_policy(cfg: &RunConfig, n_features: usize) -> Result<HyperparamPolicy> {
    Ok(cfg.policy.build(n_features)?)
}

fn build_prior(cfg: &RunConfig, n_features: usize) -> Result<PartitionPrior> {
    let prior = match cfg.prior {
        PriorKind::Uniform => PartitionPrior::Uniform,
        PriorKind::BlockSize => PartitionPrior::BlockSize {
            penalty: cfg.block_penalty,
        },
        PriorKind::Obf => PartitionPrior::Obf {
            inclusion: cfg.resolved_inclusion(n_features)?,
        },
    };
    prior.validate(n_features)?;
    Ok(prior)
}

fn names_of(set: &FeatureSet, names: &[String]) -> Vec<String> {
    set.iter().map(|f| names[f].clone()).collect()
}

/// Partition literal with feature names in place of indices.
fn named_partition(p: &FeaturePartition, names: &[String]) -> String {
    let side = |blocks: &[FeatureSet], tag: &str| {
        blocks
            .iter()
            .map(|b| format!("{tag}:{{{}}}", names_of(b, names).join(",")))
            .collect::<Vec<_>>()
            .join("|")
    };
    format!(
        "{};{}",
        side(p.good_blocks(), "G"),
        side(p.bad_blocks(), "B")
    )
}

fn selection_json(sel: &SelectionResult, names: &[String]) -> Value {
    let scores: Map<String, Value> = names
        .iter()
        .zip(&sel.scores)
        .map(|(n, s)| (n.clone(), json!(s)))
        .collect();
    json!({
        "rule": sel.rule.to_string(),
        "D": sel.target,
        "truncated": sel.truncated,
        "selected": names_of(&sel.selected, names),
        "scores": scores,
    })
}

fn write_selection(dir: &Path, sel: &SelectionResult, names: &[String]) -> Result<()> {
    write_json(&dir.join("selection.json"), &selection_json(sel, names))?;
    sel.write_csv(names, create(&dir.join("selection.csv"))?)?;
    Ok(())
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

pub fn select(cfg: &RunConfig) -> Result<()> {
    let sample = load_sample(cfg)?;
    let n = sample.n_features();
    let policy = build_policy(cfg, n)?;
    let prior = build_prior(cfg, n)?;
    let dp = posterior_marginals_dp(&sample, &policy, &prior)?;
    let marginals = dp.marginals();
    let sel = match cfg.rule {
        RuleKind::Mnc => mnc_select(&marginals)?,
        RuleKind::Cmnc => cmnc_select(&marginals, cfg.d.unwrap_or(0))?,
    };
    let dir = prepare_output(cfg)?;
    let path = dir.join("marginals.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["feature", "marginal", "log_marginal", "log_complement"])
        .map_err(csv_io(&path))?;
    for (f, name) in sample.feature_names().iter().enumerate() {
        w.write_record([
            name.clone(),
            format!("{:?}", marginals[f]),
            format!("{:?}", dp.log_marginal(f)),
            format!("{:?}", dp.log_complement(f)),
        ])
        .map_err(csv_io(&path))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    write_selection(&dir, &sel, sample.feature_names())?;
    println!(
        "{}",
        serde_json::to_string(&selection_json(&sel, sample.feature_names())).unwrap()
    );
    Ok(())
}

pub fn obf(cfg: &RunConfig) -> Result<()> {
    let sample = load_sample(cfg)?;
    let n = sample.n_features();
    let policy = build_policy(cfg, n)?;
    let inclusion = cfg.resolved_inclusion(n)?;
    let (sel, scores) = obf_select(&sample, &policy, &inclusion, cfg.d)?;
    let dir = prepare_output(cfg)?;
    let path = dir.join("obf.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record([
        "feature",
        "log_h",
        "posterior",
        "log_posterior",
        "log_complement",
    ])
    .map_err(csv_io(&path))?;
    for (name, s) in sample.feature_names().iter().zip(&scores) {
        w.write_record([
            name.clone(),
            format!("{:?}", s.log_h),
            format!("{:?}", s.posterior),
            format!("{:?}", s.log_posterior),
            format!("{:?}", s.log_complement),
        ])
        .map_err(csv_io(&path))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    write_selection(&dir, &sel, sample.feature_names())?;
    println!(
        "{}",
        serde_json::to_string(&selection_json(&sel, sample.feature_names())).unwrap()
    );
    Ok(())
}

pub fn posterior(cfg: &RunConfig) -> Result<()> {
    let sample = load_sample(cfg)?;
    let n = sample.n_features();
    let names = sample.feature_names();
    let policy = build_policy(cfg, n)?;
    let prior = build_prior(cfg, n)?;
    let table = posterior_table_enumerate_capped(&sample, &policy, &prior, cfg.cap)?;
    let top: Vec<Value> = table
        .top(cfg.top)
        .into_iter()
        .map(|(p, lp, prob)| json!({"partition": named_partition(&p, names), "log_post": lp, "prob": prob}))
        .collect();
    let marginal_f: Map<String, Value> = names
        .iter()
        .enumerate()
        .map(|(f, name)| (name.clone(), json!(table.marginal_f(f))))
        .collect();
    let good_sets: Vec<Value> = table
        .top_good_sets(cfg.top)
        .into_iter()
        .map(|(g, prob)| json!({"good_set": names_of(&g, names), "prob": prob}))
        .collect();
    let out = json!({
        "log_Z": table.log_z(),
        "n_partitions": table.len(),
        "top_partitions": top,
        "marginal_f": marginal_f,
        "marginal_G_top": good_sets,
    });
    let dir = prepare_output(cfg)?;
    write_json(&dir.join("posterior.json"), &out)?;
    println!("log_Z = {:?}, {} partitions", table.log_z(), table.len());
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let scheme = cfg
        .class0_fraction
        .map_or(SamplingScheme::Random, SamplingScheme::Separate);
    let sample = model.sample(cfg.n, cfg.seed, scheme);
    let dir = prepare_output(cfg)?;
    let path = dir.join("sample.csv");
    sample
        .to_csv(create(&path)?)
        .map_err(|e| CliError::io(&path, e))?;
    let truth = derive_unambiguous_partition(&model, cfg.tol);
    write_text(
        &dir.join("scenario.toml"),
        &toml::to_string(&model.to_spec()).expect("spec serializes"),
    )?;
    println!(
        "{} rows, {} features, truth {}",
        sample.n(),
        sample.n_features(),
        named_partition(&truth.partition, sample.feature_names())
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let n = model.n_features();
    let policy = build_policy(cfg, n)?;
    let prior = build_prior(cfg, n)?;
    let mut sc = SweepConfig::new(cfg.n_grid.clone(), cfg.replicates, cfg.seed);
    sc.cap = cfg.cap;
    sc.tol = cfg.tol;
    let result = run_sweep(&model, &policy, &prior, &sc)?;
    let reports = fit_rates(&result, FitOptions::default());
    let dir = prepare_output(cfg)?;
    result.write_tidy_csv(create(&dir.join("sweep.csv"))?)?;
    let path = dir.join("timings.csv");
    result
        .write_timings_csv(create(&path)?)
        .map_err(|e| CliError::io(&path, e))?;
    let rates = json!({
        "feature_names": result.feature_names,
        "truth_partition": result.truth_partition,
        "good_set": result.good_set,
        "n_grid": result.n_grid,
        "reports": reports,
    });
    write_json(&dir.join("rates.json"), &rates)?;
    let ok = reports
        .iter()
        .filter(|r| r.feature_signs_ok() == Some(true))
        .count();
    println!(
        "truth {}; {} of {} replicates with every feature slope negative",
        result.truth_partition,
        ok,
        reports.len()
    );
    Ok(())
}

/// Mean shift on feature 0, correlated pairs, a variance change on the
/// last feature.
fn verify_model(k: usize) -> GroundTruthModel {
    let pairs: Vec<(usize, usize, f64)> = (0..k.saturating_sub(1))
        .step_by(2)
        .map(|i| (i, i + 1, 0.4))
        .collect();
    let mut mean0 = vec![0.0; k];
    mean0[0] = 0.6;
    let mut diag1 = vec![1.0; k];
    if k > 1 {
        diag1[k - 1] = 1.6;
    }
    let spec = ScenarioSpec {
        features: k,
        class0_prob: 0.5,
        class0: ClassSpec {
            mean: mean0,
            covariance: None,
            diagonal: Some(vec![1.0; k]),
            off_diagonal: pairs.clone(),
        },
        class1: ClassSpec {
            mean: vec![0.0; k],
            covariance: None,
            diagonal: Some(diag1),
            off_diagonal: pairs,
        },
    };
    GroundTruthModel::from_spec(&spec).expect("verification model is valid")
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

struct Suite {
    name: &'static str,
    passed: bool,
    detail: String,
    secs: f64,
}

fn suite(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Suite {
    let t0 = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Suite {
        name,
        passed,
        detail,
        secs: t0.elapsed().as_secs_f64(),
    }
}

pub fn verify(cfg: &RunConfig) -> Result<()> {
    let k = cfg.verify_features;
    let model = verify_model(k);
    let seeds: Vec<u64> = (0..5).map(|r| cfg.seed + r).collect();
    let suites = [
        suite("zero-data", || {
            let mut worst: f64 = 0.0;
            for m in 1..=k {
                let empty = LabeledSample::empty(m);
                let policy = HyperparamPolicy::new(m);
                let prior = PartitionPrior::Uniform;
                let t = posterior_table_enumerate_capped(&empty, &policy, &prior, 12)?;
                for (code, _, prob) in t.iter() {
                    worst = worst.max((prob - prior.log_prior(&code.decode(m), m)?.exp()).abs());
                }
            }
            Ok((
                worst <= 1e-12,
                format!("max |posterior - prior| {worst:.2e}"),
            ))
        }),
        suite("dp-vs-enumeration", || {
            let mut worst: f64 = 0.0;
            let policy = HyperparamPolicy::new(k);
            for &seed in &seeds {
                let sample = model.sample(200, seed, SamplingScheme::Random);
                let scores = ScoreTable::build(&SampleStats::compute(&sample), &policy)?;
                let mut enum_scores = scores.clone();
                if cfg.inject_fault {
                    enum_scores.perturb(1, Role::Good, 2.0);
                }
                for prior in [
                    PartitionPrior::Uniform,
                    PartitionPrior::BlockSize { penalty: 1.0 },
                ] {
                    let t = posterior_table_from_scores(&enum_scores, &prior, 12)?;
                    let dp = dp_from_scores(&scores, &prior)?;
                    for f in 0..k {
                        worst = worst.max(rel_err(dp.marginal(f), t.marginal_f(f)));
                    }
                }
            }
            Ok((
                worst <= 1e-9,
                format!("max relative marginal error {worst:.2e}"),
            ))
        }),
        suite("obf-vs-general", || {
            let mut worst: f64 = 0.0;
            let policy = HyperparamPolicy::new(k);
            let inclusion: Vec<f64> = (0..k).map(|f| 0.2 + 0.6 * f as f64 / k as f64).collect();
            let prior = PartitionPrior::Obf {
                inclusion: inclusion.clone(),
            };
            for &seed in &seeds {
                let sample = model.sample(150, seed, SamplingScheme::Random);
                let t = posterior_table_enumerate_capped(&sample, &policy, &prior, 12)?;
                for (f, s) in obf_scores(&sample, &policy, &inclusion)?.iter().enumerate() {
                    worst = worst.max(rel_err(s.posterior, t.marginal_f(f)));
                }
            }
            Ok((worst <= 1e-9, format!("max relative error {worst:.2e}")))
        }),
        suite("fan-inequality", || {
            let (mut violations, mut eq) = (0, 0.0f64);
            for d in 1..=4 {
                let r = fan_inequality_check(250, d, cfg.seed + d as u64)?;
                violations += r.violations;
                eq = eq.max(r.max_equality_gap);
            }
            Ok((
                violations == 0 && eq <= 1e-12,
                format!("{violations} violations, equality gap {eq:.2e}"),
            ))
        }),
    ];
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<20} {:<6} {:>8}  detail", "suite", "status", "secs").ok();
    for s in &suites {
        writeln!(
            out,
            "{:<20} {:<6} {:>8.3}  {}",
            s.name,
            if s.passed { "PASS" } else { "FAIL" },
            s.secs,
            s.detail
        )
        .ok();
    }
    let failed: Vec<&str> = suites
        .iter()
        .filter(|s| !s.passed)
        .map(|s| s.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(format!(
            "failed suites: {}",
            failed.join(", ")
        )))
    }
}
