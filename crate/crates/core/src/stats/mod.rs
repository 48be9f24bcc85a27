//! Rank correlation, t-tests and multiple-comparison control.

mod rsa;
pub mod special;

pub use rsa::{
    apply_family_correction, compare_study, noise_ceiling, rsa_result, NoiseCeiling, RsaResult,
};
pub use special::student_t_two_sided_p;

use crate::rdm::Rdm;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    /// The statistic is undefined for this input (zero variance).
    #[error("statistic undefined: {0}")]
    Undefined(&'static str),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("RDM labels disagree")]
    LabelMismatch,
}

/// Upper triangle of an RDM without the diagonal, row-major.
pub fn vectorize(rdm: &Rdm) -> Vec<f64> {
    rdm.upper_triangle()
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson correlation; `Undefined` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Undefined("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
///
/// Returns [`StatsError::Undefined`] when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: x.len() });
    }
    pearson(&average_ranks(x), &average_ranks(y)).map_err(|e| match e {
        StatsError::Undefined(_) => StatsError::Undefined("constant input to spearman"),
        other => other,
    })
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn sem(x: &[f64]) -> Result<f64, StatsError> {
    if x.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: x.len() });
    }
    Ok(sample_sd(x) / (x.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// One-sample t-test of `mean(values) == mu`, two-sided.
///
/// Zero sample variance gives [`StatsError::Undefined`] rather than an infinite t.
pub fn one_sample_ttest(values: &[f64], mu: f64) -> Result<TTest, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: values.len() });
    }
    let sd = sample_sd(values);
    if sd == 0.0 {
        return Err(StatsError::Undefined("zero sample variance"));
    }
    let n = values.len() as f64;
    let t = (mean(values) - mu) / (sd / n.sqrt());
    let df = n - 1.0;
    Ok(TTest {
        t,
        df,
        p: student_t_two_sided_p(t, df),
    })
}

/// Flags `p < alpha / m` with `m = p_values.len()`.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<bool>, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let threshold = alpha / p_values.len().max(1) as f64;
    Ok(p_values.iter().map(|&p| p < threshold).collect())
}
