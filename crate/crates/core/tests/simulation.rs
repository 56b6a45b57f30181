use gradcodec::fpquant::{expected_relative_error_lognormal, FpFormat};
use gradcodec::mcsim::{
    cosine_csv, cosine_grid, empirical_cosine, empirical_relative_error, empirical_sparsity,
    relerr_csv, relerr_grid, sample_lognormal, sparsity_csv, sparsity_grid, SimConfig,
    COSINE_CSV_HEADER, RELERR_CSV_HEADER, SPARSITY_CSV_HEADER,
};
use gradcodec::prune::{analytic_cosine, threshold_for_sparsity};

#[test]
fn samples_are_reproducible_and_distinct() {
    let cfg = SimConfig::new(1.0, 2.0, 10_000, 9);
    assert_eq!(sample_lognormal(&cfg).unwrap(), sample_lognormal(&cfg).unwrap());
    let other = SimConfig::new(1.0, 2.0, 10_000, 10);
    assert_ne!(sample_lognormal(&cfg).unwrap(), sample_lognormal(&other).unwrap());
}

#[test]
fn truncated_samples_respect_bound() {
    let cfg = SimConfig::new(-2.0, 1.5, 50_000, 3).truncated(2.0);
    let xs = sample_lognormal(&cfg).unwrap();
    assert!(xs.iter().all(|x| x.ln() <= -2.0 + 1.5 * 2.0 + 1e-12));
    assert!(xs.iter().any(|x| x.ln() < -2.0 - 1.5 * 2.0));
}

#[test]
fn invalid_configs_rejected() {
    assert!(sample_lognormal(&SimConfig::new(0.0, -1.0, 10, 0)).is_err());
    assert!(sample_lognormal(&SimConfig::new(0.0, 1.0, 0, 0)).is_err());
    assert!(sample_lognormal(&SimConfig::new(0.0, 1.0, 10, 0).repetitions(0)).is_err());
}

#[test]
fn oracles_agree_with_closed_forms() {
    let cfg = SimConfig::new(0.0, 2.0, 100_000, 1);
    let f: FpFormat = "1-4-3".parse().unwrap();
    let emp = empirical_relative_error(f, &cfg).unwrap();
    let an = expected_relative_error_lognormal(2.0, 3, 4).unwrap();
    assert!((emp - an).abs() < 0.005);

    let cfg = SimConfig::new(-5.0, 2.0, 200_000, 2).repetitions(2);
    let s = empirical_sparsity(0.9, &cfg).unwrap();
    assert!((s - 0.9).abs() < 0.005);

    let cfg = SimConfig::new(0.0, 2.0, 200_000, 3).truncated(3.0);
    let alpha = threshold_for_sparsity(0.9, 0.0, 2.0).unwrap();
    let emp = empirical_cosine(alpha, &cfg).unwrap();
    let an = analytic_cosine(alpha, 2.0, 3.0).unwrap();
    assert!((emp - an).abs() < 0.01, "{emp} vs {an}");
}

#[test]
fn grids_emit_documented_csv() {
    let base = SimConfig::new(0.0, 1.0, 2_000, 4);
    let rows = relerr_grid(&[1.0, 2.0], &[6], &base).unwrap();
    let csv = relerr_csv(&rows);
    assert!(csv.starts_with(RELERR_CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + rows.len());

    let rows = sparsity_grid(&[1.0], &[0.0], &[0.5, 0.9], &base).unwrap();
    let csv = sparsity_csv(&rows);
    assert!(csv.starts_with(SPARSITY_CSV_HEADER));
    assert_eq!(csv.lines().count(), 3);

    let rows = cosine_grid(&[1.0, 2.0], 3.0, &[0.9], &base).unwrap();
    let csv = cosine_csv(&rows);
    assert!(csv.starts_with(COSINE_CSV_HEADER));
    assert_eq!(csv.lines().count(), 3);
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').count(), COSINE_CSV_HEADER.split(',').count());
    }
}
