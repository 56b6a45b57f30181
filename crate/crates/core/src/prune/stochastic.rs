use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cosine::{analytic_cosine, CosineReport};
use super::threshold::{bimodal_threshold, threshold_for_sparsity};
use crate::distfit::{fit_lognormal, LognormalParams};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::tensorio::ZeroMask;

/// Stochastic pruning with one uniform `ε` per element, keyed by `(seed, i)`:
/// `|x| > α` keeps `x`, `αε <= |x| <= α` gives `sign(x)·α`, anything smaller
/// becomes 0.
pub fn stochastic_prune(values: &[f32], alpha: f32, seed: u64) -> Result<Vec<f32>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain("alpha", format!("must be > 0, got {alpha}")));
    }
    let rng = CounterRng::new(seed);
    let a = alpha as f64;
    Ok(values
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mag = x.abs();
            if mag > alpha {
                x
            } else if x != 0.0 && a * rng.uniform_at(i as u64) <= mag as f64 {
                alpha.copysign(x)
            } else {
                0.0
            }
        })
        .collect())
}

/// Cosine of the angle between two equal-length tensors, accumulated in f64.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    let (dot, na, nb) = a
        .par_chunks(1 << 14)
        .zip(b.par_chunks(1 << 14))
        .map(|(x, y)| {
            x.iter().zip(y).fold((0.0, 0.0, 0.0), |(d, p, q), (&u, &v)| {
                let (u, v) = (u as f64, v as f64);
                (d + u * v, p + u * u, q + v * v)
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0, 0.0), |(d, p, q), (e, r, s)| (d + e, p + r, q + s));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero tensor".into()));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

pub fn zero_fraction(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| **v == 0.0).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneRequest {
    pub target_sparsity: f64,
    pub seed: u64,
    /// Fitted from the tensor (right mode only, when a mask is given) if absent.
    pub params: Option<LognormalParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub alpha: f64,
    pub target_sparsity: f64,
    pub achieved_sparsity: f64,
    pub left_ratio: f64,
    pub params: LognormalParams,
    pub seed: u64,
    pub cosine: CosineReport,
}

/// Fits, solves the threshold, prunes and measures.
///
/// A mask marks left-mode entries: they are left out of the fit and their
/// share `l` enters the threshold as `S' = (S - l) / (1 - l)`.
pub fn predict_and_prune(
    values: &[f32],
    request: &PruneRequest,
    mask: Option<&ZeroMask>,
) -> Result<(Vec<f32>, PruneReport)> {
    let (params, left_ratio) = match mask {
        None => (
            match request.params {
                Some(p) => p,
                None => fit_lognormal(&values.iter().map(|v| *v as f64).collect::<Vec<_>>())?,
            },
            0.0,
        ),
        Some(mask) => {
            if mask.len() != values.len() {
                return Err(Error::LengthMismatch(format!(
                    "mask has {} bits, tensor has {} elements",
                    mask.len(),
                    values.len()
                )));
            }
            let right: Vec<f64> = values
                .iter()
                .zip(&mask.bits)
                .filter(|(_, left)| !**left)
                .map(|(v, _)| *v as f64)
                .collect();
            let params = match request.params {
                Some(p) => p,
                None => fit_lognormal(&right)?,
            };
            (params, mask.count_set() as f64 / values.len().max(1) as f64)
        }
    };
    let alpha = if left_ratio > 0.0 {
        bimodal_threshold(request.target_sparsity, left_ratio, &params)?
    } else {
        threshold_for_sparsity(request.target_sparsity, params.mu, params.sigma)?
    };
    let alpha32 = alpha as f32;
    if !(alpha32 > 0.0 && alpha32.is_finite()) {
        return Err(Error::domain(
            "alpha",
            format!("threshold {alpha:e} is not representable as f32"),
        ));
    }
    let pruned = stochastic_prune(values, alpha32, request.seed)?;
    let achieved = zero_fraction(&pruned);
    let analytic_cos = analytic_cosine(alpha32 as f64 * (-params.mu).exp(), params.sigma, params.k)?;
    let empirical_cos = cosine_similarity(values, &pruned).ok();
    let report = PruneReport {
        alpha: alpha32 as f64,
        target_sparsity: request.target_sparsity,
        achieved_sparsity: achieved,
        left_ratio,
        params,
        seed: request.seed,
        cosine: CosineReport {
            analytic_cos,
            empirical_cos,
            alpha: alpha32 as f64,
            sparsity: achieved,
        },
    };
    Ok((pruned, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_values_pass_through() {
        let xs = [3.0f32, -7.5, 1.01, -1e6];
        assert_eq!(stochastic_prune(&xs, 1.0, 9).unwrap(), xs);
    }

    #[test]
    fn codomain_and_determinism() {
        let xs: Vec<f32> = (0..5000).map(|i| ((i as f32) * 0.731).sin() * 2.0).collect();
        let a = stochastic_prune(&xs, 1.0, 3).unwrap();
        let b = stochastic_prune(&xs, 1.0, 3).unwrap();
        assert_eq!(a, b);
        for (x, y) in xs.iter().zip(&a) {
            assert!(*y == 0.0 || y.abs() == 1.0 || (y == x && x.abs() > 1.0));
            if *y != 0.0 {
                assert_eq!(y.signum(), x.signum());
            }
        }
        assert_ne!(a, stochastic_prune(&xs, 1.0, 4).unwrap());
    }

    #[test]
    fn unbiased_at_half() {
        // same x everywhere: each index draws its own ε
        let n = 100_000;
        let xs = vec![0.5f32; n];
        let out = stochastic_prune(&xs, 1.0, 11).unwrap();
        assert!(out.iter().all(|v| *v == 0.0 || *v == 1.0));
        let mean = out.iter().map(|v| *v as f64).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn zeros_stay_zero() {
        assert_eq!(stochastic_prune(&[0.0, -0.0], 1.0, 0).unwrap(), vec![0.0, 0.0]);
        assert!(stochastic_prune(&[1.0], 0.0, 0).is_err());
        assert!(stochastic_prune(&[1.0], f32::NAN, 0).is_err());
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine_similarity(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-15);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
        assert!(cosine_similarity(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn mask_length_checked() {
        let req = PruneRequest {
            target_sparsity: 0.5,
            seed: 0,
            params: None,
        };
        let mask = ZeroMask { bits: vec![false; 3] };
        assert!(matches!(
            predict_and_prune(&[1.0, 2.0], &req, Some(&mask)),
            Err(Error::LengthMismatch(_))
        ));
    }
}
