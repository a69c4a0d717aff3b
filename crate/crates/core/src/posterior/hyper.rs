use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ObfsError, Result};
use crate::partition::FeatureSet;
use crate::stats::{cholesky, Scope};

/// Normal-inverse-Wishart hyperparameters of one block in one scope.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockHyperparams {
    pub nu: f64,
    pub kappa: f64,
    pub scale: DMatrix<f64>,
    pub location: DVector<f64>,
    /// User-supplied `ln(K·L)`; when present the prior may be improper and
    /// only the posterior quantities are validated.
    pub log_kl: Option<f64>,
}

impl BlockHyperparams {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    /// Checks the proper-prior conditions (skipped for improper blocks).
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.scale.shape() != (d, d) {
            return Err(ObfsError::InvalidHyperparams(format!(
                "scale matrix is {:?}, expected {d}x{d}",
                self.scale.shape()
            )));
        }
        if self.log_kl.is_some() {
            return Ok(());
        }
        if !(self.nu > 0.0) {
            return Err(ObfsError::InvalidHyperparams(format!(
                "nu = {} must be > 0",
                self.nu
            )));
        }
        if !(self.kappa > d as f64 - 1.0) {
            return Err(ObfsError::InvalidHyperparams(format!(
                "kappa = {} must exceed |A| - 1 = {}",
                self.kappa,
                d as f64 - 1.0
            )));
        }
        cholesky(&self.scale).map_err(|e| {
            ObfsError::InvalidHyperparams(format!("scale matrix is not positive-definite: {e}"))
        })?;
        Ok(())
    }
}

/// Generates block hyperparameters for any subset and scope.
///
/// For a subset `A` the defaults are `ν = nu_0`, `κ = |A| - 1 + kappa_offset`,
/// `S = diag(s_global[A])` and `m = m_global[A]`; explicit overrides win.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperparamPolicy {
    pub m_global: Vec<f64>,
    pub s_global: Vec<f64>,
    pub kappa_offset: f64,
    pub nu_0: f64,
    pub overrides: HashMap<(FeatureSet, Scope), BlockHyperparams>,
    /// `ln(K·L)` per (scope, block size) for improper priors.
    pub improper: HashMap<(Scope, usize), f64>,
}

pub const DEFAULT_NU_0: f64 = 1.0;
pub const DEFAULT_KAPPA_OFFSET: f64 = 3.0;

impl HyperparamPolicy {
    /// `ν = 1`, `m = 0`, `S = I`, `κ = |A| + 2`.
    pub fn new(n_features: usize) -> Self {
        HyperparamPolicy {
            m_global: vec![0.0; n_features],
            s_global: vec![1.0; n_features],
            kappa_offset: DEFAULT_KAPPA_OFFSET,
            nu_0: DEFAULT_NU_0,
            overrides: HashMap::new(),
            improper: HashMap::new(),
        }
    }

    pub fn with_kappa_offset(mut self, kappa_offset: f64) -> Self {
        self.kappa_offset = kappa_offset;
        self
    }

    pub fn with_nu(mut self, nu_0: f64) -> Self {
        self.nu_0 = nu_0;
        self
    }

    pub fn n_features(&self) -> usize {
        self.m_global.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ObfsError::InvalidHyperparams(m));
        if self.s_global.len() != self.m_global.len() {
            return bad(format!(
                "m_global has {} entries but s_global has {}",
                self.m_global.len(),
                self.s_global.len()
            ));
        }
        if self.m_global.iter().any(|m| !m.is_finite()) {
            return bad("m_global must be finite".into());
        }
        let improper = !self.improper.is_empty();
        if self
            .s_global
            .iter()
            .any(|&s| !(s > 0.0 || (improper && s == 0.0)) || !s.is_finite())
        {
            return bad("s_global entries must be positive".into());
        }
        if !(self.kappa_offset > 1.0) || !self.kappa_offset.is_finite() {
            return bad(format!(
                "kappa_offset = {} must exceed 1",
                self.kappa_offset
            ));
        }
        if !(self.nu_0 > 0.0 || (improper && self.nu_0 == 0.0)) || !self.nu_0.is_finite() {
            return bad(format!("nu_0 = {} must be positive", self.nu_0));
        }
        for v in self.improper.values() {
            if !v.is_finite() {
                return bad("improper log(K·L) constants must be finite".into());
            }
        }
        Ok(())
    }

    pub fn block(&self, subset: &FeatureSet, scope: Scope) -> Result<BlockHyperparams> {
        if subset.is_empty() {
            return Err(ObfsError::EmptySubset);
        }
        if let Some(hp) = self.overrides.get(&(subset.clone(), scope)) {
            return Ok(hp.clone());
        }
        if let Some(f) = subset.max().filter(|&f| f >= self.n_features()) {
            return Err(ObfsError::FeatureOutOfRange {
                feature: f,
                n_features: self.n_features(),
            });
        }
        let idx = subset.as_slice();
        let d = idx.len();
        Ok(BlockHyperparams {
            nu: self.nu_0,
            kappa: d as f64 - 1.0 + self.kappa_offset,
            scale: DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                idx.iter().map(|&i| self.s_global[i]),
            )),
            location: DVector::from_iterator(d, idx.iter().map(|&i| self.m_global[i])),
            log_kl: self.improper.get(&(scope, d)).copied(),
        })
    }
}

/// Serializable subset of the policy, as carried by config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub nu_0: f64,
    pub kappa_offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_global: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_global: Option<Vec<f64>>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            nu_0: DEFAULT_NU_0,
            kappa_offset: DEFAULT_KAPPA_OFFSET,
            m_global: None,
            s_global: None,
        }
    }
}

impl PolicyConfig {
    pub fn build(&self, n_features: usize) -> Result<HyperparamPolicy> {
        let mut p = HyperparamPolicy::new(n_features)
            .with_nu(self.nu_0)
            .with_kappa_offset(self.kappa_offset);
        if let Some(m) = &self.m_global {
            p.m_global = m.clone();
        }
        if let Some(s) = &self.s_global {
            p.s_global = s.clone();
        }
        if p.m_global.len() != n_features || p.s_global.len() != n_features {
            return Err(ObfsError::InvalidHyperparams(format!(
                "policy vectors must have one entry per feature ({n_features})"
            )));
        }
        p.validate()?;
        Ok(p)
    }
}
