//! Monte-Carlo counterparts of the closed forms, and synthetic tensors.
//!
//! Repetition `r` draws from `CounterRng::new(seed).fork(r)`, and element `i`
//! only touches counters derived from `i`, so results do not depend on how
//! work is scheduled.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpquant::{expected_relative_error_lognormal, quantize_value, FpFormat};
use crate::prune::{
    analytic_cosine_with, cosine_similarity, normal_prior_threshold, sparsity_given_threshold,
    stochastic_prune, threshold_for_sparsity, zero_fraction, Truncation,
};
use crate::rng::CounterRng;
use crate::tensorio::ZeroMask;

pub const DEFAULT_RELERR_SAMPLES: usize = 10_000;
pub const DEFAULT_PRUNE_SAMPLES: usize = 1_000_000;

const SIGN_STREAM: u64 = u64::MAX;
const MASK_STREAM: u64 = u64::MAX - 1;
const PRUNE_STREAM: u64 = u64::MAX - 2;
const MAX_REJECTIONS: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mu: f64,
    pub sigma: f64,
    /// Truncation `Z <= k` on the standardized log-magnitude.
    pub k: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub repetitions: usize,
    /// Attach independent random signs.
    pub signed: bool,
}

impl SimConfig {
    pub fn new(mu: f64, sigma: f64, n: usize, seed: u64) -> Self {
        Self {
            mu,
            sigma,
            k: None,
            n,
            seed,
            repetitions: 1,
            signed: false,
        }
    }

    pub fn truncated(self, k: f64) -> Self {
        Self { k: Some(k), ..self }
    }

    pub fn signed(self) -> Self {
        Self { signed: true, ..self }
    }

    pub fn repetitions(self, repetitions: usize) -> Self {
        Self { repetitions, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::domain("n", "must be >= 1"));
        }
        if self.repetitions < 1 {
            return Err(Error::domain("repetitions", "must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.mu.is_finite()) {
            return Err(Error::domain(
                "sigma",
                format!("need finite mu and sigma >= 0, got ({}, {})", self.mu, self.sigma),
            ));
        }
        if let Some(k) = self.k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::domain("k", format!("must be > 0, got {k}")));
            }
        }
        Ok(())
    }

    fn rep_rng(&self, rep: usize) -> CounterRng {
        CounterRng::new(self.seed).fork(rep as u64)
    }
}

fn draw(config: &SimConfig, rng: &CounterRng, i: u64) -> f64 {
    let z = match config.k {
        None => rng.normal_at(i),
        Some(k) => {
            let mut attempt = 0;
            loop {
                let z = rng.fork(attempt).normal_at(i);
                if z <= k || attempt == MAX_REJECTIONS {
                    break z.min(k);
                }
                attempt += 1;
            }
        }
    };
    let x = (config.mu + config.sigma * z).exp();
    if config.signed {
        x * rng.fork(SIGN_STREAM).sign_at(i)
    } else {
        x
    }
}

fn sample_rep(config: &SimConfig, rep: usize) -> Vec<f64> {
    let rng = config.rep_rng(rep);
    (0..config.n as u64)
        .into_par_iter()
        .map(|i| draw(config, &rng, i))
        .collect()
}

/// `e^{μ + σZ}` for the first repetition's stream.
pub fn sample_lognormal(config: &SimConfig) -> Result<Vec<f64>> {
    config.validate()?;
    Ok(sample_rep(config, 0))
}

pub fn sample_lognormal_f32(config: &SimConfig) -> Result<Vec<f32>> {
    Ok(sample_lognormal(config)?.into_iter().map(|v| v as f32).collect())
}

fn sample_rep_f32(config: &SimConfig, rep: usize) -> Vec<f32> {
    sample_rep(config, rep).into_iter().map(|v| v as f32).collect()
}

fn mean_over_reps(config: &SimConfig, f: impl Fn(usize) -> Result<f64> + Sync) -> Result<f64> {
    let per_rep: Vec<f64> = (0..config.repetitions)
        .into_par_iter()
        .map(&f)
        .collect::<Result<_>>()?;
    Ok(per_rep.iter().sum::<f64>() / per_rep.len() as f64)
}

/// Mean of `|x_q - x| / |x|`, averaged over repetitions.
pub fn empirical_relative_error(format: FpFormat, config: &SimConfig) -> Result<f64> {
    config.validate()?;
    mean_over_reps(config, |rep| {
        let xs = sample_rep(config, rep);
        let mut sum = 0.0;
        for x in &xs {
            sum += (quantize_value(*x, format)? - x).abs() / x.abs();
        }
        Ok(sum / xs.len() as f64)
    })
}

fn threshold_f32(alpha: f64) -> Result<f32> {
    let a = alpha as f32;
    if a > 0.0 && a.is_finite() {
        Ok(a)
    } else {
        Err(Error::domain("alpha", format!("threshold {alpha:e} overflows f32")))
    }
}

/// Achieved zero fraction when the threshold is solved from the true model.
pub fn empirical_sparsity(target: f64, config: &SimConfig) -> Result<f64> {
    config.validate()?;
    let alpha = threshold_f32(threshold_for_sparsity(target, config.mu, config.sigma)?)?;
    mean_over_reps(config, |rep| {
        let xs = sample_rep_f32(config, rep);
        let seed = config.rep_rng(rep).fork(PRUNE_STREAM).u64_at(0);
        Ok(zero_fraction(&stochastic_prune(&xs, alpha, seed)?))
    })
}

/// Achieved zero fraction when the threshold assumes `N(0, std²)` values,
/// `std` estimated from each sample.
pub fn empirical_sparsity_normal_prior(target: f64, config: &SimConfig) -> Result<f64> {
    config.validate()?;
    mean_over_reps(config, |rep| {
        let xs = sample_rep_f32(config, rep);
        let n = xs.len() as f64;
        let mean = xs.iter().map(|v| *v as f64).sum::<f64>() / n;
        let var = xs.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / n;
        let alpha = threshold_f32(normal_prior_threshold(target, var.sqrt())?)?;
        let seed = config.rep_rng(rep).fork(PRUNE_STREAM).u64_at(0);
        Ok(zero_fraction(&stochastic_prune(&xs, alpha, seed)?))
    })
}

/// Cosine between a (truncated) lognormal tensor and its pruned copy.
pub fn empirical_cosine(alpha: f64, config: &SimConfig) -> Result<f64> {
    config.validate()?;
    let alpha = threshold_f32(alpha)?;
    mean_over_reps(config, |rep| {
        let xs = sample_rep_f32(config, rep);
        let seed = config.rep_rng(rep).fork(PRUNE_STREAM).u64_at(0);
        cosine_similarity(&xs, &stochastic_prune(&xs, alpha, seed)?)
    })
}

/// Two-mode magnitudes: each element joins the left mode with probability
/// `left_ratio`; the mask marks those elements.
pub fn sample_bimodal(
    right: &SimConfig,
    left_mu: f64,
    left_sigma: f64,
    left_ratio: f64,
) -> Result<(Vec<f32>, ZeroMask)> {
    right.validate()?;
    if !(0.0..1.0).contains(&left_ratio) {
        return Err(Error::domain("left_ratio", format!("must lie in [0, 1), got {left_ratio}")));
    }
    let left = SimConfig {
        mu: left_mu,
        sigma: left_sigma,
        k: None,
        ..*right
    };
    left.validate()?;
    let root = right.rep_rng(0);
    let right_rng = root.fork(0);
    let left_rng = root.fork(1);
    let pick = root.fork(MASK_STREAM);
    let (values, bits): (Vec<f32>, Vec<bool>) = (0..right.n as u64)
        .into_par_iter()
        .map(|i| {
            let is_left = pick.uniform_at(i) < left_ratio;
            let v = if is_left {
                draw(&left, &left_rng, i)
            } else {
                draw(right, &right_rng, i)
            };
            (v as f32, is_left)
        })
        .unzip();
    Ok((values, ZeroMask { bits }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelErrRow {
    pub sigma: f64,
    pub bits: u32,
    pub n2: u32,
    pub n1: u32,
    pub analytic: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub sigma: f64,
    pub mu: f64,
    pub target: f64,
    pub alpha: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub normal_prior_empirical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineRow {
    pub sigma: f64,
    pub k: f64,
    pub target: f64,
    pub alpha: f64,
    pub analytic: f64,
    pub analytic_linear: f64,
    pub empirical: f64,
}

/// Every split with `n2 >= 1` of each width, for each `σ`.
pub fn relerr_grid(sigmas: &[f64], bit_widths: &[u32], base: &SimConfig) -> Result<Vec<RelErrRow>> {
    let mut points = Vec::new();
    for &sigma in sigmas {
        for &bits in bit_widths {
            for n2 in 1..bits {
                points.push((sigma, bits, n2));
            }
        }
    }
    points
        .into_par_iter()
        .map(|(sigma, bits, n2)| {
            let f = FpFormat::with_total(bits, n2)?;
            let cfg = SimConfig { sigma, ..*base };
            Ok(RelErrRow {
                sigma,
                bits,
                n2,
                n1: f.mantissa_bits(),
                analytic: expected_relative_error_lognormal(sigma, f.mantissa_bits(), n2)?,
                empirical: empirical_relative_error(f, &cfg)?,
            })
        })
        .collect()
}

pub fn sparsity_grid(
    sigmas: &[f64],
    mus: &[f64],
    targets: &[f64],
    base: &SimConfig,
) -> Result<Vec<SparsityRow>> {
    let mut rows = Vec::new();
    for &sigma in sigmas {
        for &mu in mus {
            for &target in targets {
                let cfg = SimConfig { mu, sigma, ..*base }.signed();
                let alpha = threshold_for_sparsity(target, mu, sigma)? as f32 as f64;
                rows.push(SparsityRow {
                    sigma,
                    mu,
                    target,
                    alpha,
                    analytic: sparsity_given_threshold(alpha, mu, sigma)?,
                    empirical: empirical_sparsity(target, &cfg)?,
                    normal_prior_empirical: empirical_sparsity_normal_prior(target, &cfg)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cosine_grid(sigmas: &[f64], k: f64, targets: &[f64], base: &SimConfig) -> Result<Vec<CosineRow>> {
    let mut rows = Vec::new();
    for &sigma in sigmas {
        for &target in targets {
            let cfg = SimConfig { mu: 0.0, sigma, ..*base }.truncated(k);
            let alpha = threshold_for_sparsity(target, 0.0, sigma)? as f32 as f64;
            rows.push(CosineRow {
                sigma,
                k,
                target,
                alpha,
                analytic: analytic_cosine_with(alpha, sigma, k, Truncation::LogDomain)?,
                analytic_linear: analytic_cosine_with(alpha, sigma, k, Truncation::LinearDomain)?,
                empirical: empirical_cosine(alpha, &cfg)?,
            });
        }
    }
    Ok(rows)
}

pub const RELERR_CSV_HEADER: &str = "sigma,N,n2,n1,analytic,empirical,abs_gap";
pub const SPARSITY_CSV_HEADER: &str =
    "sigma,mu,target,alpha,analytic,empirical,abs_gap,normal_prior_empirical";
pub const COSINE_CSV_HEADER: &str =
    "sigma,k,target,alpha,analytic,analytic_linear,empirical,abs_gap";

pub fn relerr_csv(rows: &[RelErrRow]) -> String {
    let mut s = format!("{RELERR_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.9},{:.9},{:.9}",
            r.sigma,
            r.bits,
            r.n2,
            r.n1,
            r.analytic,
            r.empirical,
            (r.analytic - r.empirical).abs()
        );
    }
    s
}

pub fn sparsity_csv(rows: &[SparsityRow]) -> String {
    let mut s = format!("{SPARSITY_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:.9},{:.9},{:.9},{:.9}",
            r.sigma,
            r.mu,
            r.target,
            r.alpha,
            r.analytic,
            r.empirical,
            (r.analytic - r.empirical).abs(),
            r.normal_prior_empirical
        );
    }
    s
}

pub fn cosine_csv(rows: &[CosineRow]) -> String {
    let mut s = format!("{COSINE_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:.9},{:.9},{:.9},{:.9}",
            r.sigma,
            r.k,
            r.target,
            r.alpha,
            r.analytic,
            r.analytic_linear,
            r.empirical,
            (r.analytic - r.empirical).abs()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distfit::fit_lognormal;

    #[test]
    fn zero_spread_is_constant() {
        let xs = sample_lognormal(&SimConfig::new(1.5, 0.0, 100, 3)).unwrap();
        assert!(xs.iter().all(|x| *x == 1.5f64.exp()));
    }

    #[test]
    fn fitted_params_recover_config() {
        let cfg = SimConfig::new(-2.0, 3.0, 100_000, 17);
        let p = fit_lognormal(&sample_lognormal(&cfg).unwrap()).unwrap();
        // CLT: sd(mean) = 3/sqrt(n) ≈ 0.0095
        assert!((p.mu + 2.0).abs() < 0.03);
        assert!((p.sigma - 3.0).abs() < 0.03);
    }

    #[test]
    fn truncation_holds() {
        let cfg = SimConfig::new(0.5, 2.0, 50_000, 1).truncated(1.0).signed();
        let xs = sample_lognormal(&cfg).unwrap();
        let bound = 0.5 + 2.0 * 1.0;
        assert!(xs.iter().all(|x| x.abs().ln() <= bound + 1e-12));
        assert!(xs.iter().any(|x| *x < 0.0) && xs.iter().any(|x| *x > 0.0));
    }

    #[test]
    fn deterministic_under_thread_count() {
        let cfg = SimConfig::new(0.0, 3.0, 20_000, 5).truncated(2.5).signed();
        let a = sample_lognormal(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_lognormal(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn bad_configs() {
        assert!(sample_lognormal(&SimConfig::new(0.0, 1.0, 0, 0)).is_err());
        assert!(sample_lognormal(&SimConfig::new(0.0, 1.0, 5, 0).repetitions(0)).is_err());
        assert!(sample_lognormal(&SimConfig::new(0.0, -1.0, 5, 0)).is_err());
        assert!(sample_lognormal(&SimConfig::new(0.0, 1.0, 5, 0).truncated(0.0)).is_err());
    }

    #[test]
    fn wide_mantissa_has_tiny_error() {
        let f = FpFormat::new(40, 6).unwrap();
        let e = empirical_relative_error(f, &SimConfig::new(0.0, 1.0, 2000, 0)).unwrap();
        assert!(e < 1e-12);
    }

    #[test]
    fn cosine_is_one_for_tiny_threshold() {
        let c = empirical_cosine(1e-30, &SimConfig::new(0.0, 1.0, 1000, 0).truncated(2.5)).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bimodal_mask_ratio() {
        let right = SimConfig::new(0.0, 1.0, 100_000, 2);
        let (xs, mask) = sample_bimodal(&right, -12.0, 5.0, 0.4).unwrap();
        assert_eq!(xs.len(), mask.len());
        let l = mask.count_set() as f64 / xs.len() as f64;
        assert!((l - 0.4).abs() < 0.01);
        assert!(sample_bimodal(&right, -12.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn csv_headers() {
        assert!(relerr_csv(&[]).starts_with("sigma,N,n2,n1,analytic,empirical,abs_gap\n"));
        assert_eq!(sparsity_csv(&[]).lines().count(), 1);
        assert_eq!(cosine_csv(&[]).lines().count(), 1);
    }
}
