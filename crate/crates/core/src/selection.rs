//! Selection rules over marginal posteriors and the closed-form filter for
//! independent features.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ObfsError, Result};
use crate::partition::{FeatureSet, Role};
use crate::posterior::{BlockHyperparams, HyperparamPolicy};
use crate::stats::{LabeledSample, Scope};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    #[serde(rename = "MNC")]
    Mnc,
    #[serde(rename = "CMNC")]
    Cmnc,
    #[serde(rename = "OBF-MNC")]
    ObfMnc,
    #[serde(rename = "OBF-CMNC")]
    ObfCmnc,
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionRule::Mnc => "MNC",
            SelectionRule::Cmnc => "CMNC",
            SelectionRule::ObfMnc => "OBF-MNC",
            SelectionRule::ObfCmnc => "OBF-CMNC",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub selected: FeatureSet,
    pub rule: SelectionRule,
    /// Posterior probability of each feature being good, by index.
    pub scores: Vec<f64>,
    /// Requested count for the constrained rules.
    pub target: Option<usize>,
    /// Set when more features were requested than exist.
    pub truncated: bool,
}

impl SelectionResult {
    /// One row per feature: `feature,score,selected,rule,D`.
    pub fn write_csv<W: Write>(&self, names: &[String], writer: W) -> Result<()> {
        let io = |e: csv::Error| ObfsError::InvalidSample(format!("writing CSV: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "score", "selected", "rule", "D"])
            .map_err(io)?;
        let d = self.target.map(|d| d.to_string()).unwrap_or_default();
        for (f, s) in self.scores.iter().enumerate() {
            let name = names.get(f).cloned().unwrap_or_else(|| format!("f{f}"));
            w.write_record([
                name,
                format!("{s:?}"),
                (self.selected.contains(f) as u8).to_string(),
                self.rule.to_string(),
                d.clone(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| ObfsError::InvalidSample(format!("writing CSV: {e}")))?;
        Ok(())
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
        Some(f) => Err(ObfsError::ScoreOutOfRange {
            feature: f,
            value: scores[f],
        }),
        None => Ok(()),
    }
}

/// Features whose posterior probability exceeds one half.
pub fn mnc_select(scores: &[f64]) -> Result<SelectionResult> {
    check_scores(scores)?;
    Ok(SelectionResult {
        selected: (0..scores.len()).filter(|&f| scores[f] > 0.5).collect(),
        rule: SelectionRule::Mnc,
        scores: scores.to_vec(),
        target: None,
        truncated: false,
    })
}

/// The `d` features with the largest scores; equal scores go to the lower
/// index.
pub fn cmnc_select(scores: &[f64], d: usize) -> Result<SelectionResult> {
    check_scores(scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(SelectionResult {
        selected: order.into_iter().take(d).collect(),
        rule: SelectionRule::Cmnc,
        scores: scores.to_vec(),
        target: Some(d),
        truncated: d > scores.len(),
    })
}

/// Closed-form posterior of one feature under the independent-feature
/// model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ObfScore {
    /// `ln h(f)`, the log posterior odds of `f` being good.
    pub log_h: f64,
    /// `h / (1 + h)`
    pub posterior: f64,
    pub log_posterior: f64,
    /// `ln(1 - posterior)`
    pub log_complement: f64,
}

impl ObfScore {
    fn from_log_h(log_h: f64) -> Self {
        // ln σ(x) = -ln(1 + e^-x)
        let log_sigmoid = |x: f64| {
            if x > 0.0 {
                -(-x).exp().ln_1p()
            } else {
                x - x.exp().ln_1p()
            }
        };
        ObfScore {
            log_h,
            posterior: if log_h >= 0.0 {
                1.0 / (1.0 + (-log_h).exp())
            } else {
                let e = log_h.exp();
                e / (1.0 + e)
            },
            log_posterior: log_sigmoid(log_h),
            log_complement: log_sigmoid(-log_h),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Scalar {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Scalar {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }
}

/// `ln Q - 0.5 κ* ln S*` for a scalar block.
fn scalar_term(g: &Scalar, hp: &BlockHyperparams) -> Result<f64> {
    hp.validate()?;
    let s = hp.scale[(0, 0)];
    let m = hp.location[0];
    let nu_star = hp.nu + g.count;
    let kappa_star = hp.kappa + g.count;
    if !(kappa_star - 2.0 > 0.0) {
        return Err(ObfsError::DegenerateKappa {
            size: 1,
            value: kappa_star - 2.0,
        });
    }
    let mut s_star = s + g.m2;
    if g.count > 0.0 {
        s_star += hp.nu * g.count / nu_star * (g.mean - m).powi(2);
    }
    if !(s_star > 0.0) {
        return Err(ObfsError::NotPositiveDefinite {
            pivot: 0,
            value: s_star,
        });
    }
    let log_kl = match hp.log_kl {
        Some(v) => v,
        None => {
            0.5 * hp.kappa * s.ln()
                - 0.5 * hp.kappa * LN_2
                - ln_gamma(0.5 * hp.kappa)
                - 0.5 * (2.0 * PI / hp.nu).ln()
        }
    };
    let log_q = log_kl
        + 0.5 * kappa_star * LN_2
        + ln_gamma(0.5 * kappa_star)
        + 0.5 * (2.0 * PI / nu_star).ln();
    Ok(log_q - 0.5 * kappa_star * s_star.ln())
}

/// Posterior of every feature being good when all blocks are singletons
/// and the events `{f good}` are independent with prior `inclusion[f]`.
///
/// One pass over the sample per feature; no matrices are formed.
pub fn obf_scores(
    sample: &LabeledSample,
    policy: &HyperparamPolicy,
    inclusion: &[f64],
) -> Result<Vec<ObfScore>> {
    let n_features = sample.n_features();
    if inclusion.len() != n_features {
        return Err(ObfsError::InvalidHyperparams(format!(
            "{} inclusion probabilities for {n_features} features",
            inclusion.len()
        )));
    }
    if let Some(f) = inclusion.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(ObfsError::InvalidInclusionPrior {
            feature: f,
            value: inclusion[f],
        });
    }
    policy.validate()?;
    (0..n_features)
        .map(|f| {
            let mut class = [Scalar::default(); 2];
            let mut pooled = Scalar::default();
            for i in 0..sample.n() {
                let x = sample.row(i)[f];
                class[sample.label(i) as usize].push(x);
                pooled.push(x);
            }
            let block = FeatureSet::from([f]);
            let term = |g: &Scalar, scope: Scope, role: Role| {
                policy
                    .block(&block, scope)
                    .and_then(|hp| scalar_term(g, &hp))
                    .map_err(|e| ObfsError::Block {
                        block: block.to_string(),
                        role,
                        source: Box::new(e),
                    })
            };
            let good = term(&class[0], Scope::Class0, Role::Good)?
                + term(&class[1], Scope::Class1, Role::Good)?;
            let bad = term(&pooled, Scope::Pooled, Role::Bad)?;
            let p = inclusion[f];
            let log_prior_odds = p.ln() - (-p).ln_1p();
            Ok(ObfScore::from_log_h(log_prior_odds + good - bad))
        })
        .collect()
}

/// Runs the closed-form filter and applies MNC (`d = None`) or CMNC.
pub fn obf_select(
    sample: &LabeledSample,
    policy: &HyperparamPolicy,
    inclusion: &[f64],
    d: Option<usize>,
) -> Result<(SelectionResult, Vec<ObfScore>)> {
    let scores = obf_scores(sample, policy, inclusion)?;
    let post: Vec<f64> = scores.iter().map(|s| s.posterior).collect();
    let mut result = match d {
        None => mnc_select(&post)?,
        Some(d) => cmnc_select(&post, d)?,
    };
    result.rule = match d {
        None => SelectionRule::ObfMnc,
        Some(_) => SelectionRule::ObfCmnc,
    };
    Ok((result, scores))
}
