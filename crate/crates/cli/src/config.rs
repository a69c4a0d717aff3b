//! Run configuration shared by every subcommand. A TOML file supplies a
//! base, command-line flags override it, and the effective result is
//! written next to the outputs.

use std::path::{Path, PathBuf};

use obfs_core::partition::{DEFAULT_PARTITION_CAP, MAX_CODED_FEATURES};
use obfs_core::posterior::PolicyConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Select,
    Obf,
    Posterior,
    Simulate,
    Sweep,
    #[default]
    Verify,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    #[default]
    Uniform,
    BlockSize,
    Obf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    #[default]
    Mnc,
    Cmnc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Labeled CSV for select, obf and posterior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Builtin scenario key or name, or a scenario TOML path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub output: PathBuf,
    pub prior: PriorKind,
    /// Block-size prior: weight `exp(-penalty (k - 1))` per block of size k.
    pub block_penalty: f64,
    /// Marginal prior of each feature being good for the OBF prior; empty
    /// means 0.5 everywhere, one value is broadcast.
    pub inclusion: Vec<f64>,
    pub rule: RuleKind,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub tol: f64,
    pub seed: u64,
    /// Sample size for simulate.
    pub n: usize,
    /// Fixed class-0 share for simulate; random labels when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class0_fraction: Option<f64>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub cap: usize,
    /// Partitions and good sets listed by posterior.
    pub top: usize,
    pub verify_features: usize,
    /// Corrupt one block score before the enumeration oracle runs.
    pub inject_fault: bool,
    pub policy: PolicyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::default(),
            input: None,
            scenario: None,
            output: PathBuf::from("obfs-out"),
            prior: PriorKind::Uniform,
            block_penalty: 1.0,
            inclusion: Vec::new(),
            rule: RuleKind::Mnc,
            d: None,
            tol: obfs_core::truth::DEFAULT_TOL,
            seed: 1,
            n: 1000,
            class0_fraction: None,
            n_grid: vec![50, 100, 200, 500, 1000, 2000, 5000],
            replicates: 1,
            cap: DEFAULT_PARTITION_CAP,
            top: 10,
            verify_features: 4,
            inject_fault: false,
            policy: PolicyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, CliError> {
        toml::from_str(src).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Input(m));
        let p = &self.policy;
        if !(p.kappa_offset > 1.0 && p.kappa_offset.is_finite()) {
            return bad(format!("kappa_offset = {} must exceed 1", p.kappa_offset));
        }
        if !(p.nu_0 > 0.0 && p.nu_0.is_finite()) {
            return bad(format!("nu_0 = {} must be positive", p.nu_0));
        }
        if p.s_global
            .iter()
            .flatten()
            .any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return bad("s_global entries must be positive".into());
        }
        if p.m_global.iter().flatten().any(|m| !m.is_finite()) {
            return bad("m_global entries must be finite".into());
        }
        if !self.block_penalty.is_finite() {
            return bad("block_penalty must be finite".into());
        }
        if let Some(f) = self.inclusion.iter().position(|&q| !(q > 0.0 && q < 1.0)) {
            return bad(format!(
                "inclusion[{f}] = {} must lie strictly inside (0, 1)",
                self.inclusion[f]
            ));
        }
        if self.rule == RuleKind::Cmnc && self.d.is_none() {
            return bad("the CMNC rule needs D".into());
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("tol must be finite and non-negative".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer".into());
        }
        if let Some(r) = self.class0_fraction {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!(
                    "class0_fraction = {r} must lie strictly inside (0, 1)"
                ));
            }
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be non-empty and strictly ascending".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.cap == 0 || self.cap > MAX_CODED_FEATURES {
            return bad(format!("cap must lie in 1..={MAX_CODED_FEATURES}"));
        }
        if self.top == 0 {
            return bad("top must be at least 1".into());
        }
        if !(1..=8).contains(&self.verify_features) {
            return bad("verify_features must lie in 1..=8".into());
        }
        Ok(())
    }

    pub fn resolved_inclusion(&self, n_features: usize) -> Result<Vec<f64>, CliError> {
        match self.inclusion.len() {
            0 => Ok(vec![0.5; n_features]),
            1 => Ok(vec![self.inclusion[0]; n_features]),
            k if k == n_features => Ok(self.inclusion.clone()),
            k => Err(CliError::Input(format!(
                "{k} inclusion probabilities for {n_features} features"
            ))),
        }
    }
}
