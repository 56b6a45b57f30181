//! Normal-distribution helpers that stay accurate deep in the tails.
//!
//! The closed forms used elsewhere multiply very large exponentials by very
//! small tail probabilities. Evaluating them naively as `e^{a} * (1 - erf(z))`
//! loses every significant digit once `erf(z)` rounds to one, so the callers
//! here work with the scaled complementary error function and log-CDFs.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::erf;

pub fn erf(x: f64) -> f64 {
    erf::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    erf::erfc(x)
}

/// Scaled complementary error function `e^{x^2} erfc(x)`.
///
/// Overflows for `x` below about -26; callers only use it for `x >= 0` or
/// moderate negative arguments.
pub fn erfcx(x: f64) -> f64 {
    if x < 26.0 {
        return erfc(x) * (x * x).exp();
    }
    // asymptotic series; the fourth term is below 1e-13 relative here
    let inv2 = 1.0 / (x * x);
    let series = 1.0 - 0.5 * inv2 + 0.75 * inv2 * inv2 - 1.875 * inv2 * inv2 * inv2;
    series / (x * PI.sqrt())
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`, accurate for large `x`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)` without underflow for very negative `x`.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        (-norm_sf(x)).ln_1p()
    } else if x > -5.0 {
        norm_cdf(x).ln()
    } else {
        let z = -x * FRAC_1_SQRT_2;
        (0.5 * erfcx(z)).ln() - 0.5 * x * x
    }
}

/// Inverse of the standard normal CDF.
///
/// The library inverse is refined with Newton steps on whichever tail is
/// closer, which brings `Φ(x)` back to `p` within a few ulps.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    for _ in 0..3 {
        let density = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        if density == 0.0 {
            break;
        }
        let residual = if p < 0.5 {
            norm_cdf(x) - p
        } else {
            (1.0 - p) - norm_sf(x)
        };
        x -= residual / density;
    }
    x
}

/// `ln(e^a + e^b)`.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + (-(a - b).abs()).exp().ln_1p()
}

/// `ln(Φ(u) - Φ(v))` for `u >= v`.
pub(crate) fn ln_norm_cdf_diff(u: f64, v: f64) -> f64 {
    debug_assert!(u >= v);
    if u == v {
        return f64::NEG_INFINITY;
    }
    if v > 0.0 {
        // both in the upper half: difference of survival functions keeps precision
        return (norm_sf(v) - norm_sf(u)).ln();
    }
    let lu = ln_norm_cdf(u);
    let lv = ln_norm_cdf(v);
    lu + (-(lv - lu).exp()).ln_1p()
}
