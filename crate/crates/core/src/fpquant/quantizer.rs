use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format::FpFormat;
use crate::error::{Error, Result};

const CHUNK: usize = 1 << 14;

/// Splits a finite nonzero `a > 0` into `(m, e)` with `a = m * 2^e`, `m` in
/// `[1, 2)`, reading the exponent from the bit pattern.
pub(crate) fn decompose(a: f64) -> (f64, i32) {
    debug_assert!(a > 0.0 && a.is_finite());
    let bits = a.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // subnormal: renormalize first
        let (m, e) = decompose(a * 2f64.powi(64));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    (m, biased - 1023)
}

fn exp2i(e: i32) -> f64 {
    2f64.powi(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Zero,
    Overflow,
    Underflow,
    InRange,
}

fn quantize_classified(x: f64, format: FpFormat) -> (f64, Branch) {
    if x == 0.0 {
        return (0.0, Branch::Zero);
    }
    let e_max = format.e_max();
    let (m, e) = decompose(x.abs());
    if e >= e_max {
        return (exp2i(e_max).copysign(x), Branch::Overflow);
    }
    if e < -e_max {
        return (0.0, Branch::Underflow);
    }
    let n1 = format.mantissa_bits() as i32;
    // (m - 1) * 2^n1 is exact: both steps only shift the binary point
    let j = ((m - 1.0) * exp2i(n1)).round_ties_even();
    let q = (1.0 + j * exp2i(-n1)) * exp2i(e);
    (q.copysign(x), Branch::InRange)
}

/// Rounds `x` onto the grid `{0} ∪ {±(1 + jΔ) 2^E} ∪ {±2^E_max}`.
///
/// Values with `E >= E_max` clamp to `±2^E_max`, values with `E < -E_max`
/// flush to zero, and in-range mantissas round to nearest with ties to even
/// `j`. A mantissa rounding up to 2 carries into the next binade.
pub fn quantize_value(x: f64, format: FpFormat) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain("x", format!("must be finite, got {x}")));
    }
    Ok(quantize_classified(x, format).0)
}

/// Whether `v` is an exact output of [`quantize_value`] for `format`.
pub fn is_representable(v: f64, format: FpFormat) -> bool {
    if v == 0.0 {
        return true;
    }
    if !v.is_finite() {
        return false;
    }
    let e_max = format.e_max();
    let (m, e) = decompose(v.abs());
    if e == e_max {
        return m == 1.0;
    }
    if e > e_max || e < -e_max {
        return false;
    }
    let t = (m - 1.0) * exp2i(format.mantissa_bits() as i32);
    t == t.trunc()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum ScaleMode {
    None,
    Fixed(f64),
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantStats {
    /// Scaled elements whose exponent reached `E_max` and were clamped.
    pub overflow_count: u64,
    /// Nonzero elements flushed to zero.
    pub underflow_count: u64,
    /// Mean of `|x_q - x| / |x|` over nonzero inputs; 0 when there are none.
    pub mean_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub values: Vec<f64>,
    pub format: FpFormat,
    /// `log2` of the factor the tensor was divided by before rounding.
    pub scale_log2: f64,
    pub stats: QuantStats,
}

/// Per-layer scale `μ_l = ⌊log2 max|X|⌋ / log2(E_max)` and the factor `2^μ_l`.
pub fn gradient_scale(values: &[f32], n2: u32) -> Result<(f64, f64)> {
    if n2 < 2 {
        return Err(Error::domain(
            "exponent_bits",
            format!("per-layer scaling needs n2 >= 2, got {n2}"),
        ));
    }
    let max = values.iter().map(|v| v.abs()).fold(0.0f32, f32::max);
    if max == 0.0 {
        return Err(Error::Degenerate("tensor has no nonzero element".into()));
    }
    let (_, e) = decompose(max as f64);
    let mu = e as f64 / (n2 - 1) as f64;
    Ok((mu, mu.exp2()))
}

#[derive(Default, Clone, Copy)]
struct Partial {
    overflow: u64,
    underflow: u64,
    nonzero: u64,
    rel_sum: f64,
}

/// Quantizes every element, undoing any pre-scale afterwards.
///
/// Work is split into fixed-size chunks whose partial sums are combined in
/// order, so results do not depend on the thread count.
pub fn quantize_tensor(values: &[f32], format: FpFormat, mode: ScaleMode) -> Result<QuantizedTensor> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index: i,
            value: values[i],
        });
    }
    let all_zero = values.iter().all(|v| *v == 0.0);
    let scale_log2 = match mode {
        ScaleMode::None => 0.0,
        ScaleMode::Fixed(c) => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::domain("scale", format!("must be > 0, got {c}")));
            }
            -c.log2()
        }
        ScaleMode::PerLayer if all_zero => 0.0,
        ScaleMode::PerLayer => gradient_scale(values, format.exponent_bits())?.0,
    };
    // fixed(c) multiplies by c; the other modes divide by 2^μ
    let pre = match mode {
        ScaleMode::Fixed(c) => c,
        _ => (-scale_log2).exp2(),
    };

    let mut out = vec![0.0f64; values.len()];
    let partials: Vec<Partial> = out
        .par_chunks_mut(CHUNK)
        .zip(values.par_chunks(CHUNK))
        .map(|(dst, src)| {
            let mut p = Partial::default();
            for (d, &x) in dst.iter_mut().zip(src) {
                let x = x as f64;
                let (q, branch) = quantize_classified(x * pre, format);
                let q = if pre == 1.0 { q } else { q / pre };
                *d = q;
                match branch {
                    Branch::Zero => continue,
                    Branch::Overflow => p.overflow += 1,
                    Branch::Underflow => p.underflow += 1,
                    Branch::InRange => {}
                }
                p.nonzero += 1;
                p.rel_sum += (q - x).abs() / x.abs();
            }
            p
        })
        .collect();
    let total = partials.iter().fold(Partial::default(), |a, b| Partial {
        overflow: a.overflow + b.overflow,
        underflow: a.underflow + b.underflow,
        nonzero: a.nonzero + b.nonzero,
        rel_sum: a.rel_sum + b.rel_sum,
    });
    Ok(QuantizedTensor {
        values: out,
        format,
        scale_log2,
        stats: QuantStats {
            overflow_count: total.overflow,
            underflow_count: total.underflow,
            mean_relative_error: if total.nonzero == 0 {
                0.0
            } else {
                total.rel_sum / total.nonzero as f64
            },
        },
    })
}
