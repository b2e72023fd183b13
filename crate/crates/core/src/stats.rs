//! Correlation screening, one-way ANOVA and error metrics.

use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;
use thiserror::Error;

use crate::types::{FactorSet, MetFactor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("series is constant")]
    ConstantSeries,
    #[error("empty input")]
    Empty,
    #[error("need at least 2 groups of 2 or more samples")]
    InsufficientGroups,
}

/// Pearson correlation of one factor against TD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub factor: MetFactor,
    pub r: f64,
    pub p: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Regularized incomplete beta `I_x(a, b)`, clamped to [0, 1].
fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    checked_beta_reg(a, b, x.clamp(0.0, 1.0)).expect("positive shape parameters").clamp(0.0, 1.0)
}

/// Two-sided Student-t p-value for statistic `t` with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(0.5 * df, 0.5, df / (df + t * t))
}

/// Upper-tail probability of the F distribution.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson coefficient and its two-sided p-value: (r, p).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { need: 3, got: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 { 0.0 } else { t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df) };
    Ok((r, p))
}

pub fn correlate(factor: MetFactor, x: &[f64], td: &[f64]) -> Result<CorrelationResult, StatsError> {
    let (r, p) = pearson(x, td)?;
    Ok(CorrelationResult { factor, r, p, n_samples: x.len() })
}

/// Keeps factors with `p <= p_max` and `|r| >= r_min`.
pub fn select_factors(correlations: &[CorrelationResult], r_min: f64, p_max: f64) -> FactorSet {
    FactorSet::new(correlations.iter().filter(|c| c.p <= p_max && c.r.abs() >= r_min).map(|c| c.factor))
        .expect("one result per factor")
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<(), StatsError> {
    if actual.len() != predicted.len() {
        return Err(StatsError::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(())
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, StatsError> {
    check_pair(actual, predicted)?;
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, StatsError> {
    check_pair(actual, predicted)?;
    let sae: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(sae / actual.len() as f64)
}

pub fn anova_oneway<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 || groups.iter().any(|g| g.as_ref().len() < 2) {
        return Err(StatsError::InsufficientGroups);
    }
    let total: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    let sizes: Vec<f64> = groups.iter().map(|g| g.as_ref().len() as f64).collect();
    let means: Vec<f64> = groups.iter().map(|g| mean(g.as_ref())).collect();
    // pairwise form: exactly zero when all group means agree
    let mut ss_between = 0.0;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            ss_between += sizes[i] * sizes[j] * (means[i] - means[j]).powi(2);
        }
    }
    ss_between /= total as f64;
    let ss_within: f64 =
        groups.iter().zip(&means).map(|(g, m)| g.as_ref().iter().map(|v| (v - m) * (v - m)).sum::<f64>()).sum();
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let f = if ms_between == 0.0 {
        0.0
    } else if ms_within == 0.0 {
        f64::INFINITY
    } else {
        ms_between / ms_within
    };
    let p = f_survival(f, df_between as f64, df_within as f64);
    Ok(AnovaResult { f, p, df_between, df_within })
}
