//! Distribution fitting and Kolmogorov-Smirnov ranking.
//!
//! Log families (lognormal, log-Laplace) are fitted and scored on the natural
//! log of nonzero magnitudes; the symmetric families on the signed values.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_quantile};

pub const DEFAULT_TRUNCATION_QUANTILE: f64 = 0.997;

/// Lognormal model of gradient magnitudes: `ln|x| ~ N(mu, sigma^2)`, truncated
/// at `ln|x| <= mu + k sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    pub mu: f64,
    pub sigma: f64,
    pub k: f64,
}

impl LognormalParams {
    pub fn new(mu: f64, sigma: f64, k: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain("mu", format!("must be finite, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain("sigma", format!("must be > 0, got {sigma}")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::domain("k", format!("must be > 0, got {k}")));
        }
        Ok(Self { mu, sigma, k })
    }
}

fn log_magnitudes(samples: &[f64]) -> Vec<f64> {
    samples
        .iter()
        .filter(|x| **x != 0.0 && x.is_finite())
        .map(|x| x.abs().ln())
        .collect()
}

fn mean_and_pop_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolation quantile (type 7) of already sorted data.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn moments_of_logs(samples: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let logs = log_magnitudes(samples);
    if logs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: logs.len(),
        });
    }
    let (mu, sigma) = mean_and_pop_std(&logs);
    if !(sigma > 1e-12 * mu.abs().max(1.0)) {
        return Err(Error::Degenerate(format!(
            "log-magnitudes have zero spread (mu = {mu})"
        )));
    }
    Ok((logs, mu, sigma))
}

/// Fits `mu`, `sigma` by moments of `ln|x|` over nonzero entries, and `k`
/// from the 0.997 quantile.
pub fn fit_lognormal(samples: &[f64]) -> Result<LognormalParams> {
    fit_lognormal_with_quantile(samples, DEFAULT_TRUNCATION_QUANTILE)
}

pub fn fit_lognormal_with_quantile(samples: &[f64], q: f64) -> Result<LognormalParams> {
    let (logs, mu, sigma) = moments_of_logs(samples)?;
    let k = truncation_from_logs(&logs, mu, sigma, q)?;
    LognormalParams::new(mu, sigma, k)
}

/// `k = (quantile_q(ln|x|) - mu) / sigma`.
pub fn estimate_truncation(samples: &[f64], params: &LognormalParams, q: f64) -> Result<f64> {
    let logs = log_magnitudes(samples);
    if logs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    truncation_from_logs(&logs, params.mu, params.sigma, q)
}

fn truncation_from_logs(logs: &[f64], mu: f64, sigma: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain("quantile", format!("must lie in (0, 1), got {q}")));
    }
    let sorted = sorted_copy(logs);
    let k = (sorted_quantile(&sorted, q) - mu) / sigma;
    if !(k > 0.0) {
        return Err(Error::domain(
            "k",
            format!("truncation multiplier must be > 0, quantile {q} gives {k}"),
        ));
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Lognormal,
    Laplace,
    Loglaplace,
    Uniform,
    Cauchy,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Normal,
        Family::Lognormal,
        Family::Laplace,
        Family::Loglaplace,
        Family::Uniform,
        Family::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Lognormal => "lognormal",
            Family::Laplace => "laplace",
            Family::Loglaplace => "loglaplace",
            Family::Uniform => "uniform",
            Family::Cauchy => "cauchy",
        }
    }

    pub fn is_log_family(self) -> bool {
        matches!(self, Family::Lognormal | Family::Loglaplace)
    }

    /// The value domain the KS statistic is computed on.
    pub fn convention(self) -> Convention {
        if self.is_log_family() {
            Convention::Magnitude
        } else {
            Convention::Signed
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::domain("family", format!("unknown family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Signed,
    Magnitude,
}

/// A fitted member of one of the supported families.
///
/// For the log families the parameters describe `ln|x|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Normal { mean: f64, std: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Laplace { loc: f64, scale: f64 },
    Loglaplace { loc: f64, scale: f64 },
    Uniform { lo: f64, hi: f64 },
    Cauchy { loc: f64, scale: f64 },
}

fn laplace_cdf(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

fn laplace_quantile(p: f64, loc: f64, scale: f64) -> f64 {
    if p < 0.5 {
        loc + scale * (2.0 * p).ln()
    } else {
        loc - scale * (2.0 - 2.0 * p).ln()
    }
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::Normal { .. } => Family::Normal,
            Model::Lognormal { .. } => Family::Lognormal,
            Model::Laplace { .. } => Family::Laplace,
            Model::Loglaplace { .. } => Family::Loglaplace,
            Model::Uniform { .. } => Family::Uniform,
            Model::Cauchy { .. } => Family::Cauchy,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Model::Normal { mean, std } => vec![mean, std],
            Model::Lognormal { mu, sigma } => vec![mu, sigma],
            Model::Laplace { loc, scale }
            | Model::Loglaplace { loc, scale }
            | Model::Cauchy { loc, scale } => vec![loc, scale],
            Model::Uniform { lo, hi } => vec![lo, hi],
        }
    }

    pub fn from_params(family: Family, params: &[f64]) -> Result<Self> {
        let [a, b] = params else {
            return Err(Error::domain(
                "params",
                format!("{family} takes 2 parameters, got {}", params.len()),
            ));
        };
        let (a, b) = (*a, *b);
        let model = match family {
            Family::Normal => Model::Normal { mean: a, std: b },
            Family::Lognormal => Model::Lognormal { mu: a, sigma: b },
            Family::Laplace => Model::Laplace { loc: a, scale: b },
            Family::Loglaplace => Model::Loglaplace { loc: a, scale: b },
            Family::Uniform => Model::Uniform { lo: a, hi: b },
            Family::Cauchy => Model::Cauchy { loc: a, scale: b },
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Model::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && hi > lo,
            _ => {
                let p = self.params();
                p[0].is_finite() && p[1].is_finite() && p[1] > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(
                "params",
                format!("invalid {} parameters {:?}", self.family(), self.params()),
            ))
        }
    }

    /// CDF on the model's own domain (`ln|x|` for log families).
    fn base_cdf(&self, t: f64) -> f64 {
        match *self {
            Model::Normal { mean, std } => norm_cdf((t - mean) / std),
            Model::Lognormal { mu, sigma } => norm_cdf((t - mu) / sigma),
            Model::Laplace { loc, scale } | Model::Loglaplace { loc, scale } => {
                laplace_cdf(t, loc, scale)
            }
            Model::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            Model::Cauchy { loc, scale } => 0.5 + ((t - loc) / scale).atan() / PI,
        }
    }

    fn base_quantile(&self, p: f64) -> f64 {
        match *self {
            Model::Normal { mean, std } => mean + std * norm_quantile(p),
            Model::Lognormal { mu, sigma } => mu + sigma * norm_quantile(p),
            Model::Laplace { loc, scale } | Model::Loglaplace { loc, scale } => {
                laplace_quantile(p, loc, scale)
            }
            Model::Uniform { lo, hi } => lo + p * (hi - lo),
            Model::Cauchy { loc, scale } => loc + scale * (PI * (p - 0.5)).tan(),
        }
    }

    /// CDF at a sample value (a magnitude for log families).
    pub fn cdf(&self, x: f64) -> f64 {
        if self.family().is_log_family() {
            if x <= 0.0 {
                return 0.0;
            }
            self.base_cdf(x.ln())
        } else {
            self.base_cdf(x)
        }
    }

    /// Inverse CDF; magnitudes for log families.
    pub fn quantile(&self, p: f64) -> f64 {
        let t = self.base_quantile(p);
        if self.family().is_log_family() {
            t.exp()
        } else {
            t
        }
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    sorted_quantile(sorted, 0.5)
}

fn laplace_fit(values: &[f64]) -> (f64, f64) {
    let sorted = sorted_copy(values);
    let loc = median_of_sorted(&sorted);
    let scale = values.iter().map(|v| (v - loc).abs()).sum::<f64>() / values.len() as f64;
    (loc, scale)
}

/// Fits one family with its moment/order-statistic estimator.
pub fn fit_family(samples: &[f64], family: Family) -> Result<Model> {
    let values: Vec<f64> = if family.is_log_family() {
        log_magnitudes(samples)
    } else {
        samples.iter().copied().filter(|x| x.is_finite()).collect()
    };
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let model = match family {
        Family::Normal | Family::Lognormal => {
            let (m, s) = mean_and_pop_std(&values);
            if family == Family::Normal {
                Model::Normal { mean: m, std: s }
            } else {
                Model::Lognormal { mu: m, sigma: s }
            }
        }
        Family::Laplace | Family::Loglaplace => {
            let (loc, scale) = laplace_fit(&values);
            if family == Family::Laplace {
                Model::Laplace { loc, scale }
            } else {
                Model::Loglaplace { loc, scale }
            }
        }
        Family::Uniform => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Model::Uniform { lo, hi }
        }
        Family::Cauchy => {
            let sorted = sorted_copy(&values);
            let loc = median_of_sorted(&sorted);
            let scale = 0.5 * (sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25));
            Model::Cauchy { loc, scale }
        }
    };
    model.validate().map_err(|_| {
        Error::Degenerate(format!(
            "{family} fit produced invalid parameters {:?}",
            model.params()
        ))
    })?;
    Ok(model)
}

/// Two-sided KS distance between the empirical CDF of `samples` and `model`.
///
/// Both step edges are checked at every order statistic:
/// `max(i/n - F(x_i), F(x_i) - (i-1)/n)`.
pub fn ks_statistic(samples: &[f64], model: &Model) -> Result<f64> {
    model.validate()?;
    let mut xs: Vec<f64> = if model.family().is_log_family() {
        samples
            .iter()
            .filter(|x| **x != 0.0 && x.is_finite())
            .map(|x| x.abs())
            .collect()
    } else {
        samples.iter().copied().filter(|x| x.is_finite()).collect()
    };
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = model.cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0f64, f64::max);
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: Family,
    pub params: Vec<f64>,
    pub ks_stat: f64,
    pub convention: Convention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub family: Family,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitRanking {
    /// Successful fits, best (smallest KS distance) first.
    pub reports: Vec<FitReport>,
    pub failures: Vec<FitFailure>,
}

pub fn fit_report(samples: &[f64], families: &[Family]) -> FitRanking {
    let mut ranking = FitRanking::default();
    for &family in families {
        let scored = fit_family(samples, family).and_then(|m| Ok((m, ks_statistic(samples, &m)?)));
        match scored {
            Ok((model, ks_stat)) => ranking.reports.push(FitReport {
                family,
                params: model.params(),
                ks_stat,
                convention: family.convention(),
            }),
            Err(e) => ranking.failures.push(FitFailure {
                family,
                message: e.to_string(),
            }),
        }
    }
    ranking.reports.sort_by(|a, b| {
        a.ks_stat
            .partial_cmp(&b.ks_stat)
            .unwrap_or(Ordering::Equal)
            .then(a.family.cmp(&b.family))
    });
    ranking
}
