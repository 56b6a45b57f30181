use std::f64::consts::{PI, SQRT_2};

use crate::distfit::LognormalParams;
use crate::error::{Error, Result};
use crate::special::{erf, erfcx, norm_cdf};

/// Bisection stops once the sparsity misses the target by less than this.
pub const SPARSITY_TOLERANCE: f64 = 1e-6;
pub const MAX_BISECTION_STEPS: usize = 200;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("sigma", format!("must be > 0, got {sigma}")))
    }
}

fn check_sparsity(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("sparsity", format!("must lie in (0, 1), got {s}")))
    }
}

/// Sparsity as a function of the log-threshold `L = ln α - μ`:
/// `S = Φ(L/σ) - e^{σ²/2 - L} Φ((L - σ²)/σ)`.
///
/// The second term multiplies a huge exponential by a tiny tail once `σ`
/// grows; below the crossover it is evaluated as `½ erfcx(z) e^{-L²/2σ²}`.
pub(crate) fn sparsity_at_log(l: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let z = (s2 - l) / (sigma * SQRT_2);
    let second = if z >= 0.0 {
        0.5 * erfcx(z) * (-0.5 * l * l / s2).exp()
    } else {
        (0.5 * s2 - l).exp() * norm_cdf((l - s2) / sigma)
    };
    (norm_cdf(l / sigma) - second).clamp(0.0, 1.0)
}

/// Fraction of zeros left by stochastic pruning at threshold `alpha` on
/// `Lognormal(mu, sigma²)` magnitudes.
pub fn sparsity_given_threshold(alpha: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain("alpha", format!("must be > 0, got {alpha}")));
    }
    check_sigma(sigma)?;
    Ok(sparsity_at_log(alpha.ln() - mu, sigma))
}

/// Bisects a non-decreasing `f` on `[lo, hi]` for `f(x) = target`, widening
/// the bracket by its own width when it does not straddle the target.
pub(crate) fn bisect_increasing(
    f: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    for _ in 0..64 {
        if f(lo) <= target {
            break;
        }
        lo -= hi - lo;
    }
    for _ in 0..64 {
        if f(hi) >= target {
            break;
        }
        hi += hi - lo;
    }
    if f(lo) > target || f(hi) < target {
        return Err(Error::NoConvergence(format!(
            "could not bracket target {target}"
        )));
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() < tol {
            return Ok(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(format!(
        "bisection for target {target} did not reach tolerance {tol}"
    )))
}

/// Inverts [`sparsity_given_threshold`] by bisection on `ln α` over
/// `[μ - 8σ, μ + 8σ]`.
pub fn threshold_for_sparsity(target: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sparsity(target)?;
    check_sigma(sigma)?;
    if !mu.is_finite() {
        return Err(Error::domain("mu", format!("must be finite, got {mu}")));
    }
    let l = bisect_increasing(
        |l| sparsity_at_log(l, sigma),
        target,
        -8.0 * sigma,
        8.0 * sigma,
        SPARSITY_TOLERANCE,
    )?;
    Ok((mu + l).exp())
}

/// Threshold for total sparsity `S` when a fraction `left_ratio` of the
/// entries sits in a low-magnitude mode that pruning zeroes anyway: solve the
/// right mode for `S' = (S - l) / (1 - l)`.
pub fn bimodal_threshold(target: f64, left_ratio: f64, right: &LognormalParams) -> Result<f64> {
    check_sparsity(target)?;
    if !(0.0..1.0).contains(&left_ratio) {
        return Err(Error::domain(
            "left_ratio",
            format!("must lie in [0, 1), got {left_ratio}"),
        ));
    }
    if left_ratio >= target {
        return Err(Error::InfeasibleSparsity {
            left_ratio,
            target,
        });
    }
    let right_target = (target - left_ratio) / (1.0 - left_ratio);
    threshold_for_sparsity(right_target, right.mu, right.sigma)
}

/// Sparsity of stochastic pruning on `N(0, std²)` values:
/// `erf(c) + (e^{-c²} - 1) / (c √π)` with `c = α / (√2 std)`.
pub fn sparsity_given_threshold_normal(alpha: f64, std: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain("alpha", format!("must be > 0, got {alpha}")));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::domain("std", format!("must be > 0, got {std}")));
    }
    Ok(normal_sparsity(alpha / (SQRT_2 * std)))
}

fn normal_sparsity(c: f64) -> f64 {
    if c < 1e-4 {
        // series: c/√π - c³/(3√π) + ...
        return c / PI.sqrt();
    }
    (erf(c) + ((-c * c).exp() - 1.0) / (c * PI.sqrt())).clamp(0.0, 1.0)
}

/// Threshold for sparsity `S` under the (mis-specified) assumption that the
/// values are `N(0, std²)`.
pub fn normal_prior_threshold(target: f64, std: f64) -> Result<f64> {
    check_sparsity(target)?;
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::domain("std", format!("must be > 0, got {std}")));
    }
    let lc = bisect_increasing(
        |lc| normal_sparsity(lc.exp()),
        target,
        -20.0,
        10.0,
        SPARSITY_TOLERANCE,
    )?;
    Ok(lc.exp() * SQRT_2 * std)
}
