use gradcodec::encode::{
    compression_ratio, decode_stream, encode_stream, read_stream, write_stream, EncodedStream,
    SymbolCounts,
};
use gradcodec::mcsim::{sample_lognormal_f32, SimConfig};
use gradcodec::prune::{stochastic_prune, threshold_for_sparsity};
use proptest::prelude::*;

fn pruned(target: f64, seed: u64) -> (Vec<f32>, f32) {
    let xs = sample_lognormal_f32(&SimConfig::new(-6.0, 3.0, 200_000, seed).signed()).unwrap();
    let alpha = threshold_for_sparsity(target, -6.0, 3.0).unwrap() as f32;
    (stochastic_prune(&xs, alpha, seed).unwrap(), alpha)
}

#[test]
fn pruned_tensors_round_trip_bit_exact() {
    for (i, target) in [0.8, 0.9].into_iter().enumerate() {
        let (ys, alpha) = pruned(target, i as u64);
        let s = encode_stream(&ys, alpha, 32).unwrap();
        let back = decode_stream(&s).unwrap();
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            ys.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = SymbolCounts::of(&ys, alpha);
        assert_eq!(s.bit_len, c.zeros + 3 * c.alphas + 34 * c.passthrough);
        assert_eq!(s.bits.len() as u64, s.bit_len.div_ceil(8));
        let ratio = compression_ratio(c, 32).unwrap();
        assert!(ratio < 32.0 * (1.0 - target) + 3.0);
    }
}

#[test]
fn file_round_trip_and_corruption() {
    let (ys, alpha) = pruned(0.85, 3);
    let s = encode_stream(&ys, alpha, 32).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.enc");
    write_stream(&s, &path).unwrap();
    assert_eq!(read_stream(&path).unwrap(), s);

    let bytes = s.to_bytes();
    assert!(EncodedStream::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(EncodedStream::from_bytes(&extra).is_err());
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(EncodedStream::from_bytes(&magic).is_err());
}

#[test]
fn half_width_requires_exact_payloads() {
    let ys = [0.0f32, 0.5, -0.5, 1.5, -3.0];
    let s = encode_stream(&ys, 0.5, 16).unwrap();
    assert_eq!(s.bit_len, 1 + 3 + 3 + 18 + 18);
    assert_eq!(decode_stream(&s).unwrap(), ys);
    assert!(encode_stream(&[0.1f32], 0.5, 16).is_err());
    assert!(encode_stream(&ys, 0.5, 8).is_err());
}

proptest! {
    #[test]
    fn arbitrary_values_round_trip(
        raw in proptest::collection::vec(any::<u32>(), 0..300),
        alpha in 1e-6f32..10.0,
    ) {
        let mut ys: Vec<f32> = raw.iter().map(|b| f32::from_bits(*b)).collect();
        for (i, v) in ys.iter_mut().enumerate() {
            match i % 4 {
                0 => *v = 0.0,
                1 => *v = alpha,
                2 => *v = -alpha,
                _ => {}
            }
        }
        let s = encode_stream(&ys, alpha, 32).unwrap();
        let back = EncodedStream::from_bytes(&s.to_bytes()).unwrap();
        prop_assert_eq!(&back, &s);
        let out = decode_stream(&back).unwrap();
        prop_assert_eq!(
            out.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            ys.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
