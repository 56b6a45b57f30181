//! Closed-form expected relative error and the optimal bit split.
//!
//! For a lognormal magnitude with natural-log spread `σ` the binary exponent
//! `log2|x|` is normal with spread `s = σ / ln 2`. The error splits into three
//! parts: rounding inside `[-E_max, E_max)`, clamping above, flushing below.
//! With `P = Φ(E_max / s)`:
//!
//! ```text
//! mid       = (2P - 1) · c(n1)
//! overflow  = (1 - P) - ½ erfcx(t/√2) · exp(-E_max² / 2s²),   t = s ln2 + E_max/s
//! underflow = 1 - P
//! ```
//!
//! The normal prior replaces `E_max` by `2^E_max` inside the probabilities.

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::format::FpFormat;
use crate::error::{Error, Result};
use crate::special::{erfcx, norm_cdf, norm_sf};

/// `E|q(m) - m| / m` for `m = 2^U`, `U ~ U[0, 1)`, rounding to `{1, 2}`.
pub const MANTISSA_TERM_NO_BITS: f64 = 0.169_925_001_442_312_4;

/// Mantissa rounding term `c(n1)` of the mid-range error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MantissaModel {
    /// `1 / (8 ln2 · 2^n1)`, the small-spacing limit for grid step `2^-n1`.
    #[default]
    SpacingConsistent,
    /// `1 / (8 ln2 · (2^n1 - 1))`.
    AsPrinted,
}

impl MantissaModel {
    pub fn term(self, n1: u32) -> f64 {
        if n1 == 0 {
            return MANTISSA_TERM_NO_BITS;
        }
        let denom = match self {
            MantissaModel::SpacingConsistent => (n1 as f64).exp2(),
            MantissaModel::AsPrinted => (n1 as f64).exp2() - 1.0,
        };
        1.0 / (8.0 * LN_2 * denom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    Lognormal,
    Normal,
}

impl std::str::FromStr for Prior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lognormal" => Ok(Prior::Lognormal),
            "normal" => Ok(Prior::Normal),
            _ => Err(Error::domain("prior", format!("unknown prior {s:?}"))),
        }
    }
}

impl std::fmt::Display for Prior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Prior::Lognormal => "lognormal",
            Prior::Normal => "normal",
        })
    }
}

fn check_args(sigma: f64, n1: u32, n2: u32) -> Result<FpFormat> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain("sigma", format!("must be > 0, got {sigma}")));
    }
    if n2 < 1 {
        return Err(Error::domain("exponent_bits", "must be >= 1"));
    }
    FpFormat::new(n1, n2)
}

pub fn expected_relative_error_lognormal(sigma: f64, n1: u32, n2: u32) -> Result<f64> {
    expected_relative_error_lognormal_with(sigma, n1, n2, MantissaModel::default())
}

pub fn expected_relative_error_lognormal_with(
    sigma: f64,
    n1: u32,
    n2: u32,
    model: MantissaModel,
) -> Result<f64> {
    let f = check_args(sigma, n1, n2)?;
    let s = sigma / LN_2;
    let e_max = f.e_max() as f64;
    let z = e_max / s;
    let p = norm_cdf(z);
    let tail = norm_sf(z);
    let t = s * LN_2 + z;
    let mid = (2.0 * p - 1.0) * model.term(n1);
    let overflow = tail - 0.5 * erfcx(t / SQRT_2) * (-0.5 * z * z).exp();
    Ok(mid + overflow + tail)
}

pub fn expected_relative_error_normal(sigma: f64, n1: u32, n2: u32) -> Result<f64> {
    expected_relative_error_normal_with(sigma, n1, n2, MantissaModel::default())
}

pub fn expected_relative_error_normal_with(
    sigma: f64,
    n1: u32,
    n2: u32,
    model: MantissaModel,
) -> Result<f64> {
    let f = check_args(sigma, n1, n2)?;
    let e_max = f.e_max() as f64;
    let a = e_max.exp2();
    let z = a / sigma;
    let p = norm_cdf(z);
    let tail = norm_sf(z);
    let t = sigma * LN_2 + z;
    let mid = (2.0 * p - 1.0) * model.term(n1);
    let overflow = tail - 0.5 * erfcx(t / SQRT_2) * (e_max * LN_2 - a * LN_2 - 0.5 * z * z).exp();
    Ok(mid + overflow + tail)
}

pub fn expected_relative_error(prior: Prior, sigma: f64, format: FpFormat) -> Result<f64> {
    let (n1, n2) = (format.mantissa_bits(), format.exponent_bits());
    match prior {
        Prior::Lognormal => expected_relative_error_lognormal(sigma, n1, n2),
        Prior::Normal => expected_relative_error_normal(sigma, n1, n2),
    }
}

/// Best `1-n2-n1` split of an `N`-bit word, enumerating `n2 = 1..N-1`.
/// Ties go to the smaller `n2`.
pub fn optimal_allocation(sigma: f64, total_bits: u32, prior: Prior) -> Result<FpFormat> {
    Ok(allocation_errors(sigma, total_bits, prior)?
        .into_iter()
        .fold(None::<(FpFormat, f64)>, |best, (f, err)| match best {
            Some((_, b)) if b <= err => best,
            _ => Some((f, err)),
        })
        .expect("at least one candidate")
        .0)
}

/// Expected error of every candidate split, ordered by `n2`.
pub fn allocation_errors(sigma: f64, total_bits: u32, prior: Prior) -> Result<Vec<(FpFormat, f64)>> {
    if total_bits < 2 {
        return Err(Error::domain("bits", format!("need N >= 2, got {total_bits}")));
    }
    let top = total_bits.min(super::format::MAX_EXPONENT_BITS + 1);
    (1..top)
        .map(|n2| {
            let f = FpFormat::with_total(total_bits, n2)?;
            Ok((f, expected_relative_error(prior, sigma, f)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub sigma: f64,
    pub bits: u32,
    pub n2: u32,
    pub n1: u32,
    pub expected_error: f64,
}

pub const DEFAULT_SIGMA_STEP: f64 = 0.1;

/// Grid `lo, lo + step, ...` up to `hi`, built by multiplication so long
/// sweeps do not drift.
pub fn sigma_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::domain("sigma_range", format!("need lo <= hi, got [{lo}, {hi}]")));
    }
    if !(step > 0.0) {
        return Err(Error::domain("step", format!("must be > 0, got {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

pub fn allocation_table(
    lo: f64,
    hi: f64,
    step: f64,
    bit_widths: &[u32],
    prior: Prior,
) -> Result<Vec<AllocationRow>> {
    let grid = sigma_grid(lo, hi, step)?;
    let mut rows = Vec::with_capacity(grid.len() * bit_widths.len());
    for &sigma in &grid {
        for &bits in bit_widths {
            let f = optimal_allocation(sigma, bits, prior)?;
            rows.push(AllocationRow {
                sigma,
                bits,
                n2: f.exponent_bits(),
                n1: f.mantissa_bits(),
                expected_error: expected_relative_error(prior, sigma, f)?,
            });
        }
    }
    Ok(rows)
}

pub const ALLOCATION_CSV_HEADER: &str = "sigma,N,n2,n1,expected_error";

pub fn allocation_csv(rows: &[AllocationRow]) -> String {
    let mut out = String::from(ALLOCATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:.9}", fmt_sigma(r.sigma), r.bits, r.n2, r.n1, r.expected_error);
    }
    out
}

fn fmt_sigma(s: f64) -> String {
    let r = (s * 1e9).round() / 1e9;
    format!("{r}")
}
