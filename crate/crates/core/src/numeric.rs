//! Log-domain arithmetic, special functions and small regression helpers.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let mut acc = LogSumExp::default();
    acc.add(a);
    acc.add(b);
    acc.value()
}

/// `ln Σ e^x` over `xs`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSumExp::default();
    xs.iter().for_each(|&x| acc.add(x));
    acc.value()
}

/// Streaming log-sum-exp.
///
/// The running total is `e^max · (1 + rest)`, where `rest` excludes the
/// largest term, so `ln` of a total dominated by one term keeps full
/// precision through `ln_1p`.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    rest: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            rest: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            self.max = x;
            self.rest = 0.0;
        } else if x <= self.max {
            self.rest += (x - self.max).exp();
        } else {
            self.rest = (1.0 + self.rest) * (self.max - x).exp();
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
        } else if other.max <= self.max {
            self.rest += (1.0 + other.rest) * (other.max - self.max).exp();
        } else {
            self.rest = other.rest + (1.0 + self.rest) * (self.max - other.max).exp();
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.rest.ln_1p()
        }
    }
}

/// Log of the multivariate gamma function,
/// `ln Γ_d(x) = d(d-1)/4 · ln π + Σ_{k=1..d} ln Γ(x + (1-k)/2)`.
pub fn ln_mv_gamma(d: usize, x: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * PI.ln()
        + (1..=d)
            .map(|k| ln_gamma(x + (1.0 - k as f64) / 2.0))
            .sum::<f64>()
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

/// `None` with fewer than two points or constant `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Some(LinearFit {
        slope,
        intercept,
        rms_residual: (ss / nf).sqrt(),
    })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [-1.0, 0.5, 2.0, -3.0];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 1.0]), 1.0);
    }

    #[test]
    fn log_sum_exp_keeps_tiny_tails() {
        // ln(1 + e^-50) ≈ e^-50; the naive route rounds to 0.
        let v = log_sum_exp(&[0.0, -50.0]);
        assert!((v - (-50f64).exp()).abs() < 1e-35);
        assert!(log_sum_exp(&[1000.0, 1000.0]).is_finite());
    }

    #[test]
    fn merge_equals_sequential() {
        let xs = [3.0, -2.0, 7.5, 0.0, 7.5, -40.0];
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        xs[..3].iter().for_each(|&x| a.add(x));
        xs[3..].iter().for_each(|&x| b.add(x));
        a.merge(&b);
        assert!((a.value() - log_sum_exp(&xs)).abs() < 1e-13);
    }

    #[test]
    fn mv_gamma_reduces_to_gamma() {
        assert!((ln_mv_gamma(1, 4.5) - ln_gamma(4.5)).abs() < 1e-14);
        // Γ_2(x) = sqrt(pi) Γ(x) Γ(x - 1/2)
        let x = 3.0;
        let expect = 0.5 * PI.ln() + ln_gamma(x) + ln_gamma(x - 0.5);
        assert!((ln_mv_gamma(2, x) - expect).abs() < 1e-13);
    }

    #[test]
    fn fit_and_ranks() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 2.0]).is_none());
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 5.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 1.0]), None);
    }
}
