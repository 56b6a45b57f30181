use serde::{Deserialize, Serialize};

use super::cosine::analytic_cosine;
use super::threshold::{bimodal_threshold, sparsity_given_threshold, threshold_for_sparsity};
use crate::distfit::LognormalParams;
use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub const DEFAULT_MAX_CAP: f64 = 0.97;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub target_sparsity: f64,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub layer_id: String,
    pub n: u64,
    pub mu: f64,
    pub sigma: f64,
    pub k: f64,
    /// 0 is the deepest layer, the first one reached in the backward pass.
    pub depth_rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_ratio: Option<f64>,
}

impl LayerProfile {
    pub fn params(&self) -> Result<LognormalParams> {
        LognormalParams::new(self.mu, self.sigma, self.k)
    }

    fn left(&self) -> f64 {
        self.left_ratio.unwrap_or(0.0)
    }

    fn sparsity_at(&self, alpha: f64) -> Result<f64> {
        let l = self.left();
        Ok(l + (1.0 - l) * sparsity_given_threshold(alpha, self.mu, self.sigma)?)
    }

    fn threshold_for(&self, target: f64) -> Result<f64> {
        if self.left() > 0.0 {
            bimodal_threshold(target, self.left(), &self.params()?)
        } else {
            threshold_for_sparsity(target, self.mu, self.sigma)
        }
    }

    fn cosine_at(&self, alpha: f64) -> Result<f64> {
        analytic_cosine(alpha * (-self.mu).exp(), self.sigma, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAllocation {
    pub layer_id: String,
    pub depth_rank: u32,
    pub n: u64,
    #[serde(flatten)]
    pub spec: PruneSpec,
    pub analytic_cos: f64,
    /// The cosine floor lowered this layer's sparsity.
    pub cosine_bound: bool,
    /// The cap lowered this layer's sparsity.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub layers: Vec<LayerAllocation>,
    pub target_sparsity: f64,
    /// Element-weighted mean of the per-layer sparsities.
    pub overall_sparsity: f64,
    pub warning: Option<String>,
}

/// Outcome of the single compensation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compensation {
    /// Sparsity the unconstrained layers need, before the cap.
    pub demanded: f64,
    /// What they get after the cap.
    pub granted: f64,
    pub overall: f64,
}

/// `S_rest = (S·Σn - Σ S_i n_i) / Σ_rest n`, clamped to `[0, cap]`.
///
/// With no unconstrained layers nothing can compensate and `granted` is 0.
pub fn compensate(target: f64, constrained: &[(f64, u64)], rest_n: u64, cap: f64) -> Compensation {
    let fixed_n: u64 = constrained.iter().map(|(_, n)| n).sum();
    let fixed_zeros: f64 = constrained.iter().map(|(s, n)| s * *n as f64).sum();
    let total = (fixed_n + rest_n) as f64;
    if rest_n == 0 {
        return Compensation {
            demanded: 0.0,
            granted: 0.0,
            overall: fixed_zeros / total,
        };
    }
    let demanded = (target * total - fixed_zeros) / rest_n as f64;
    let granted = demanded.clamp(0.0, cap);
    Compensation {
        demanded,
        granted,
        overall: (fixed_zeros + granted * rest_n as f64) / total,
    }
}

/// Largest threshold at or below `alpha` whose cosine meets `floor`.
fn shrink_for_cosine(layer: &LayerProfile, alpha: f64, floor: f64) -> Result<f64> {
    let ok = |ln_a: f64| -> Result<bool> { Ok(layer.cosine_at(ln_a.exp())? >= floor) };
    let mut hi = alpha.ln();
    let mut lo = hi - 4.0 * layer.sigma;
    let mut widen = 0;
    while !ok(lo)? {
        lo -= 4.0 * layer.sigma;
        widen += 1;
        if widen > 64 {
            return Err(Error::NoConvergence(format!(
                "no threshold reaches cosine {floor} for layer {}",
                layer.layer_id
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(lo.exp())
}

/// Per-layer sparsities holding an overall budget while the deepest layers
/// keep a minimum cosine similarity.
///
/// Constrained layers start at the global target and back off until their
/// analytic cosine reaches the floor; the remaining layers absorb the
/// difference in one pass, capped at `max_cap`. A binding cap leaves the
/// overall sparsity short of the target and attaches a warning.
pub fn heterogeneous_allocate(
    layers: &[LayerProfile],
    target: f64,
    max_cap: f64,
    seed: u64,
) -> Result<Allocation> {
    if layers.is_empty() {
        return Err(Error::domain("layers", "at least one layer is required"));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::domain("sparsity", format!("must lie in (0, 1), got {target}")));
    }
    if !(max_cap > 0.0 && max_cap <= 1.0) {
        return Err(Error::domain("max_cap", format!("must lie in (0, 1], got {max_cap}")));
    }
    let mut order: Vec<&LayerProfile> = layers.iter().collect();
    order.sort_by_key(|l| l.depth_rank);
    for l in &order {
        l.params()?;
        if l.n == 0 {
            return Err(Error::domain("n", format!("layer {} has no elements", l.layer_id)));
        }
        if let Some(c) = l.min_cosine {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::domain(
                    "min_cosine",
                    format!("must lie in (0, 1), got {c} for layer {}", l.layer_id),
                ));
            }
        }
    }
    if let Some(first_free) = order.iter().position(|l| l.min_cosine.is_none()) {
        if let Some(late) = order[first_free..].iter().find(|l| l.min_cosine.is_some()) {
            return Err(Error::domain(
                "min_cosine",
                format!(
                    "only the deepest layers may be constrained; {} follows an unconstrained layer",
                    late.layer_id
                ),
            ));
        }
    }

    let streams = CounterRng::new(seed);
    let layer_seed = |i: usize| streams.fork(i as u64).u64_at(0);

    let mut out = Vec::with_capacity(order.len());
    let mut constrained = Vec::new();
    for (i, layer) in order.iter().enumerate() {
        let Some(floor) = layer.min_cosine else { break };
        let mut alpha = layer.threshold_for(target)?;
        let mut sparsity = target;
        let mut cosine = layer.cosine_at(alpha)?;
        let bound = cosine < floor;
        if bound {
            alpha = shrink_for_cosine(layer, alpha, floor)?;
            sparsity = layer.sparsity_at(alpha)?;
            cosine = layer.cosine_at(alpha)?;
        }
        constrained.push((sparsity, layer.n));
        out.push(LayerAllocation {
            layer_id: layer.layer_id.clone(),
            depth_rank: layer.depth_rank,
            n: layer.n,
            spec: PruneSpec {
                target_sparsity: sparsity,
                alpha,
                seed: layer_seed(i),
            },
            analytic_cos: cosine,
            cosine_bound: bound,
            capped: false,
        });
    }

    let rest = &order[out.len()..];
    let rest_n: u64 = rest.iter().map(|l| l.n).sum();
    let comp = compensate(target, &constrained, rest_n, max_cap);
    let capped = comp.granted < comp.demanded;
    for layer in rest {
        let i = out.len();
        let alpha = layer.threshold_for(comp.granted)?;
        out.push(LayerAllocation {
            layer_id: layer.layer_id.clone(),
            depth_rank: layer.depth_rank,
            n: layer.n,
            spec: PruneSpec {
                target_sparsity: comp.granted,
                alpha,
                seed: layer_seed(i),
            },
            analytic_cos: layer.cosine_at(alpha)?,
            cosine_bound: false,
            capped,
        });
    }

    let warning = (comp.overall < target - 1e-9).then(|| {
        format!(
            "overall sparsity {:.6} falls short of target {target}: {}",
            comp.overall,
            if rest.is_empty() {
                "every layer is cosine-constrained".to_string()
            } else {
                format!("compensating layers capped at {max_cap}")
            }
        )
    });
    Ok(Allocation {
        layers: out,
        target_sparsity: target,
        overall_sparsity: comp.overall,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(id: &str, n: u64, rank: u32, min_cos: Option<f64>) -> LayerProfile {
        LayerProfile {
            layer_id: id.into(),
            n,
            mu: -8.0,
            sigma: 3.0,
            k: 2.5,
            depth_rank: rank,
            min_cosine: min_cos,
            left_ratio: None,
        }
    }

    #[test]
    fn compensation_arithmetic() {
        let c = compensate(0.9, &[(0.5, 100_000)], 1_000_000, 0.97);
        assert!((c.demanded - 0.94).abs() < 1e-12);
        assert_eq!(c.granted, c.demanded);
        assert!((c.overall - 0.9).abs() < 1e-12);

        // deep layer at 0.5, overall target 0.95: the shallow layer is asked
        // for 0.995 and gets the 0.97 cap
        let c = compensate(0.95, &[(0.5, 100_000)], 1_000_000, 0.97);
        assert!((c.demanded - 0.995).abs() < 1e-12);
        assert_eq!(c.granted, 0.97);
        assert!((c.overall - (0.97e6 + 0.5e5) / 1.1e6).abs() < 1e-15);
        assert!((c.overall - 0.927_27).abs() < 1e-5);
    }

    #[test]
    fn unconstrained_is_homogeneous() {
        let layers = [layer("a", 1000, 0, None), layer("b", 5000, 1, None)];
        let a = heterogeneous_allocate(&layers, 0.9, DEFAULT_MAX_CAP, 0).unwrap();
        for l in &a.layers {
            assert!((l.spec.target_sparsity - 0.9).abs() < 1e-15);
        }
        assert!((a.overall_sparsity - 0.9).abs() < 1e-12);
        assert!(a.warning.is_none());
    }

    #[test]
    fn cosine_floor_backs_off_and_rest_compensates() {
        let layers = [
            layer("deep", 100_000, 0, Some(0.99)),
            layer("shallow", 1_000_000, 1, None),
        ];
        let a = heterogeneous_allocate(&layers, 0.9, DEFAULT_MAX_CAP, 1).unwrap();
        let deep = &a.layers[0];
        assert!(deep.cosine_bound);
        assert!((deep.analytic_cos - 0.99).abs() < 1e-6);
        assert!(deep.spec.target_sparsity < 0.9);
        let weighted: f64 = a
            .layers
            .iter()
            .map(|l| l.spec.target_sparsity * l.n as f64)
            .sum::<f64>()
            / 1.1e6;
        assert!((weighted - 0.9).abs() < 1e-6);
        assert!((a.overall_sparsity - 0.9).abs() < 1e-6);
        assert!(a.warning.is_none());
    }

    #[test]
    fn shortfall_when_everything_is_constrained() {
        let layers = [layer("deep", 10, 0, Some(0.999))];
        let a = heterogeneous_allocate(&layers, 0.9, DEFAULT_MAX_CAP, 0).unwrap();
        assert!(a.overall_sparsity < 0.9);
        assert!(a.warning.is_some());
    }

    #[test]
    fn validation() {
        assert!(heterogeneous_allocate(&[], 0.9, 0.97, 0).is_err());
        let bad_order = [layer("a", 10, 0, None), layer("b", 10, 1, Some(0.9))];
        assert!(heterogeneous_allocate(&bad_order, 0.9, 0.97, 0).is_err());
        let ok = [layer("a", 10, 0, None)];
        assert!(heterogeneous_allocate(&ok, 0.9, 0.0, 0).is_err());
        assert!(heterogeneous_allocate(&ok, 1.0, 0.97, 0).is_err());
    }

    #[test]
    fn profile_json_shape() {
        let json = r#"[{"layer_id":"conv1","n":4096,"mu":-9.5,"sigma":3.1,"k":2.6,"depth_rank":0,"min_cosine":0.9},
                       {"layer_id":"conv2","n":8192,"mu":-8.0,"sigma":2.9,"k":2.4,"depth_rank":1,"left_ratio":0.3}]"#;
        let layers: Vec<LayerProfile> = serde_json::from_str(json).unwrap();
        assert_eq!(layers[0].min_cosine, Some(0.9));
        assert_eq!(layers[1].left_ratio, Some(0.3));
        let a = heterogeneous_allocate(&layers, 0.8, DEFAULT_MAX_CAP, 0).unwrap();
        assert_eq!(a.layers.len(), 2);
    }
}
