use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Command, PriorKind, RuleKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "obfs",
    version,
    about = "Exact Bayesian feature selection over labeled feature partitions"
)]
pub struct Cli {
    /// Base configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible timings-free runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Posterior feature marginals and MNC/CMNC selection.
    Select(SelectArgs),
    /// Closed-form filter for independent singleton features.
    Obf(ObfArgs),
    /// Full posterior table: top partitions and good sets.
    Posterior(PosteriorArgs),
    /// Draw a labeled sample from a scenario.
    Simulate(SimulateArgs),
    /// Posterior concentration along growing samples, with rate fits.
    Sweep(SweepArgs),
    /// Run the built-in oracle suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Labeled CSV: one column per feature and a `label` column of 0/1.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long)]
    pub nu_0: Option<f64>,
    #[arg(long)]
    pub kappa_offset: Option<f64>,
    /// Prior means, one per feature.
    #[arg(long, value_delimiter = ',')]
    pub m_global: Option<Vec<f64>>,
    /// Prior scale diagonal, one per feature.
    #[arg(long, value_delimiter = ',')]
    pub s_global: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long, value_enum)]
    pub prior: Option<PriorKind>,
    #[arg(long)]
    pub block_penalty: Option<f64>,
    /// Marginal inclusion probabilities (one value, or one per feature).
    #[arg(long, value_delimiter = ',')]
    pub inclusion: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, value_enum)]
    pub rule: Option<RuleKind>,
    /// Number of features kept by CMNC; implies `--rule cmnc`.
    #[arg(short = 'd', long = "D")]
    pub d: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ObfArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, value_delimiter = ',')]
    pub inclusion: Option<Vec<f64>>,
    /// Keep the top D features instead of thresholding at 0.5.
    #[arg(short = 'd', long = "D")]
    pub d: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PosteriorArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Builtin key (a-e) or name, or a scenario TOML file.
    #[arg(long, short)]
    pub scenario: Option<String>,
    #[arg(short, long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fix the class-0 share instead of drawing labels at random.
    #[arg(long)]
    pub class0_fraction: Option<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, short)]
    pub scenario: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Feature count of the enumeration suites.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corrupt one block score seen by enumeration only.
    #[arg(long)]
    pub inject_fault: bool,
}

fn set<T>(slot: &mut T, v: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = v {
        *slot = v.clone();
    }
}

impl InputArgs {
    fn apply(&self, c: &mut RunConfig) {
        if self.input.is_some() {
            c.input = self.input.clone();
        }
        set(&mut c.output, &self.output);
    }
}

impl PolicyArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.policy.nu_0, &self.nu_0);
        set(&mut c.policy.kappa_offset, &self.kappa_offset);
        if self.m_global.is_some() {
            c.policy.m_global = self.m_global.clone();
        }
        if self.s_global.is_some() {
            c.policy.s_global = self.s_global.clone();
        }
    }
}

impl PriorArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.prior, &self.prior);
        set(&mut c.block_penalty, &self.block_penalty);
        set(&mut c.inclusion, &self.inclusion);
    }
}

impl Sub {
    /// Overlays the flags on `base` and returns the effective config.
    pub fn apply(&self, mut c: RunConfig) -> RunConfig {
        match self {
            Sub::Select(a) => {
                c.command = Command::Select;
                a.io.apply(&mut c);
                a.policy.apply(&mut c);
                a.prior.apply(&mut c);
                if a.d.is_some() {
                    c.d = a.d;
                    c.rule = RuleKind::Cmnc;
                }
                set(&mut c.rule, &a.rule);
            }
            Sub::Obf(a) => {
                c.command = Command::Obf;
                a.io.apply(&mut c);
                a.policy.apply(&mut c);
                set(&mut c.inclusion, &a.inclusion);
                if a.d.is_some() {
                    c.d = a.d;
                }
            }
            Sub::Posterior(a) => {
                c.command = Command::Posterior;
                a.io.apply(&mut c);
                a.policy.apply(&mut c);
                a.prior.apply(&mut c);
                set(&mut c.top, &a.top);
                set(&mut c.cap, &a.cap);
            }
            Sub::Simulate(a) => {
                c.command = Command::Simulate;
                if a.scenario.is_some() {
                    c.scenario = a.scenario.clone();
                }
                set(&mut c.n, &a.n);
                set(&mut c.seed, &a.seed);
                if a.class0_fraction.is_some() {
                    c.class0_fraction = a.class0_fraction;
                }
                set(&mut c.output, &a.output);
            }
            Sub::Sweep(a) => {
                c.command = Command::Sweep;
                if a.scenario.is_some() {
                    c.scenario = a.scenario.clone();
                }
                set(&mut c.n_grid, &a.n_grid);
                set(&mut c.replicates, &a.replicates);
                set(&mut c.seed, &a.seed);
                set(&mut c.tol, &a.tol);
                set(&mut c.cap, &a.cap);
                a.policy.apply(&mut c);
                a.prior.apply(&mut c);
                set(&mut c.output, &a.output);
            }
            Sub::Verify(a) => {
                c.command = Command::Verify;
                set(&mut c.verify_features, &a.features);
                set(&mut c.seed, &a.seed);
                c.inject_fault |= a.inject_fault;
            }
        }
        c
    }
}
