//! Cosine similarity between a truncated-lognormal tensor and its pruned copy.
//!
//! With `μ = 0` and magnitudes truncated at `ln x <= c`, pruning is unbiased
//! (`E[T | X] = X`), so `E[X T] = E[X²]` and
//! `cos = sqrt(E[X²] / E[T²])`. Both moments are kept in log space relative to
//! `e^{2σ²}`, since for `σ = 5` that factor alone is `e^{50}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_norm_cdf, ln_norm_cdf_diff, log_add_exp};

/// Where the truncation bound `k` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// `ln x <= kσ`, matching `k` estimated from quantiles of `ln|x|`.
    #[default]
    LogDomain,
    /// `x <= kσ`, i.e. a log-bound of `ln(kσ)`.
    LinearDomain,
}

impl Truncation {
    fn log_bound(self, sigma: f64, k: f64) -> f64 {
        match self {
            Truncation::LogDomain => k * sigma,
            Truncation::LinearDomain => (k * sigma).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    pub analytic_cos: f64,
    pub empirical_cos: Option<f64>,
    pub alpha: f64,
    pub sparsity: f64,
}

/// Expected cosine similarity after pruning at `alpha` (already divided by
/// `e^μ`).
pub fn analytic_cosine(alpha: f64, sigma: f64, k: f64) -> Result<f64> {
    analytic_cosine_with(alpha, sigma, k, Truncation::default())
}

pub fn analytic_cosine_with(alpha: f64, sigma: f64, k: f64, truncation: Truncation) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain("alpha", format!("must be > 0, got {alpha}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain("sigma", format!("must be > 0, got {sigma}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain("k", format!("must be > 0, got {k}")));
    }
    let s2 = sigma * sigma;
    let c = truncation.log_bound(sigma, k);
    let l = alpha.ln().min(c);
    let upper = (c - 2.0 * s2) / sigma;
    // ln(E[X²; ln X <= c] / e^{2σ²})
    let second_moment = ln_norm_cdf(upper);
    // below α: T² = α X on average; between α and the bound: T = X
    let below = alpha.ln() - 1.5 * s2 + ln_norm_cdf((l - s2) / sigma);
    let above = ln_norm_cdf_diff(upper, (l - 2.0 * s2) / sigma);
    let pruned_moment = log_add_exp(below, above);
    Ok((0.5 * (second_moment - pruned_moment)).exp().min(1.0))
}
