use gradcodec::distfit::fit_lognormal;
use gradcodec::fpquant::{
    allocation_errors, expected_relative_error_lognormal, gradient_scale, is_representable,
    optimal_allocation, quantize_tensor, quantize_value, FpFormat, Prior, ScaleMode,
};
use gradcodec::mcsim::{sample_lognormal, sample_lognormal_f32, SimConfig};
use proptest::prelude::*;
use std::f64::consts::LN_2;

fn format() -> impl Strategy<Value = FpFormat> {
    (0u32..=10, 0u32..=8).prop_map(|(n1, n2)| FpFormat::new(n1, n2).unwrap())
}

fn magnitude() -> impl Strategy<Value = f64> {
    (-300.0f64..300.0, any::<bool>()).prop_map(|(e, neg)| if neg { -e.exp2() } else { e.exp2() })
}

proptest! {
    #[test]
    fn odd_idempotent_representable(f in format(), x in magnitude()) {
        let q = quantize_value(x, f).unwrap();
        prop_assert_eq!(quantize_value(-x, f).unwrap(), -q);
        prop_assert_eq!(quantize_value(q, f).unwrap(), q);
        prop_assert!(is_representable(q, f));
    }

    #[test]
    fn monotone(f in format(), a in magnitude(), b in magnitude()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize_value(lo, f).unwrap() <= quantize_value(hi, f).unwrap());
    }

    #[test]
    fn nearest_grid_point(x in 1.0f64..2.0) {
        let f: FpFormat = "1-5-2".parse().unwrap();
        let q = quantize_value(x, f).unwrap();
        let best = [1.0, 1.25, 1.5, 1.75, 2.0]
            .iter()
            .map(|g| (g - x).abs())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(((q - x).abs() - best).abs() < 1e-15);
    }
}

#[test]
fn tensor_error_matches_closed_form() {
    for (i, &sigma) in [1.0, 3.0, 5.0].iter().enumerate() {
        let xs = sample_lognormal_f32(&SimConfig::new(0.0, sigma, 100_000, 30 + i as u64)).unwrap();
        for n in 5..=8u32 {
            for n2 in 2..n {
                let f = FpFormat::with_total(n, n2).unwrap();
                let q = quantize_tensor(&xs, f, ScaleMode::None).unwrap();
                let an = expected_relative_error_lognormal(sigma, f.mantissa_bits(), n2).unwrap();
                let gap = (q.stats.mean_relative_error - an).abs();
                assert!(gap <= 0.02, "sigma {sigma} {f}: gap {gap}");
            }
        }
    }
}

#[test]
fn fp8_sigma3_curve_has_interior_minimum() {
    let errs = allocation_errors(3.0, 8, Prior::Lognormal).unwrap();
    let best = errs
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert_eq!(best.to_string(), "1-5-2");
}

#[test]
fn argmin_stable_under_estimated_sigma() {
    let boundary_gap = |sigma: f64, n: u32| {
        let f = optimal_allocation(sigma, n, Prior::Lognormal).unwrap();
        let same = |s: f64| optimal_allocation(s, n, Prior::Lognormal).unwrap() == f;
        same(sigma - 0.05) && same(sigma + 0.05)
    };
    let mut tested = 0;
    for (i, &sigma) in [1.5, 2.2, 3.0, 4.0, 4.6, 6.0].iter().enumerate() {
        let xs = sample_lognormal(&SimConfig::new(-6.0, sigma, 100_000, 40 + i as u64)).unwrap();
        let est = fit_lognormal(&xs).unwrap().sigma;
        for n in 5..=8 {
            if !boundary_gap(sigma, n) {
                continue;
            }
            tested += 1;
            assert_eq!(
                optimal_allocation(est, n, Prior::Lognormal).unwrap(),
                optimal_allocation(sigma, n, Prior::Lognormal).unwrap(),
                "sigma {sigma} est {est} N {n}"
            );
        }
    }
    assert!(tested >= 12);
}

#[test]
fn per_layer_scaling_as_specified() {
    let cfg = SimConfig::new(-20.0 * LN_2, 1.0, 100_000, 50);
    let xs = sample_lognormal_f32(&cfg).unwrap();
    let f: FpFormat = "1-5-0".parse().unwrap();
    let none = quantize_tensor(&xs, f, ScaleMode::None).unwrap();
    let frac = |c: u64| c as f64 / xs.len() as f64;
    assert!(frac(none.stats.underflow_count) > 0.99);

    // μ_l = ⌊log2 max⌋ / 4 only lifts the bulk by a few octaves:
    // a value underflows when log2 x - μ_l < -16, i.e. z < (4 + μ_l) ln2
    let (mu, _) = gradient_scale(&xs, 5).unwrap();
    let max = xs.iter().map(|v| *v as f64).fold(0.0, f64::max);
    assert_eq!(mu, max.log2().floor() / 4.0);
    assert!(mu > -4.0 && mu < -3.0);
    let per_layer = quantize_tensor(&xs, f, ScaleMode::PerLayer).unwrap();
    assert_eq!(per_layer.scale_log2, mu);
    let expect = gradcodec::special::norm_cdf((4.0 + mu) * LN_2);
    assert!((frac(per_layer.stats.underflow_count) - expect).abs() < 0.01);
}

#[test]
fn scaled_maximum_below_clamp_never_overflows() {
    for (i, &(mu, sigma)) in [(-12.0, 2.0), (-3.0, 3.0), (5.0, 1.0), (-30.0, 4.0)].iter().enumerate() {
        let xs = sample_lognormal_f32(&SimConfig::new(mu, sigma, 50_000, 60 + i as u64).signed()).unwrap();
        for n2 in 2..=6u32 {
            let f = FpFormat::new(7u32.saturating_sub(n2), n2).unwrap();
            let (m, scale) = gradient_scale(&xs, n2).unwrap();
            let max = xs.iter().map(|v| v.abs() as f64).fold(0.0, f64::max);
            let q = quantize_tensor(&xs, f, ScaleMode::PerLayer).unwrap();
            assert_eq!(q.scale_log2, m);
            if max / scale < (f.e_max() as f64).exp2() {
                assert_eq!(q.stats.overflow_count, 0, "mu {mu} sigma {sigma} {f}");
            }
        }
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let xs = sample_lognormal_f32(&SimConfig::new(0.0, 3.0, 200_000, 70)).unwrap();
    let f: FpFormat = "1-4-3".parse().unwrap();
    let a = quantize_tensor(&xs, f, ScaleMode::PerLayer).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| quantize_tensor(&xs, f, ScaleMode::PerLayer).unwrap());
    assert_eq!(a, b);
}
