//! Binary tensor dumps and zero-mask files.
//!
//! Tensor file layout (all little-endian):
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `GRD1`               |
//! | 4      | 4    | version, u32 = 1           |
//! | 8      | 8    | element count, u64         |
//! | 16     | 4·n  | f32 payload                |
//!
//! Layer id and free-form metadata live in an optional JSON sidecar at
//! `<path>.json`. Masks use the same header with magic `MSK1` followed by
//! `ceil(n/8)` bytes of packed bits, most significant bit first.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"GRD1";
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

const SIDECAR_SCHEMA: &str = "gradcodec.tensor-meta/1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorDump {
    pub values: Vec<f32>,
    pub layer_id: String,
    /// Free-form annotations; the key `mask` conventionally names a mask file.
    pub metadata: BTreeMap<String, String>,
}

impl TensorDump {
    pub fn new(values: Vec<f32>) -> Self {
        Self {
            values,
            ..Self::default()
        }
    }

    pub fn element_count(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(&self.values)
    }
}

/// One flag per tensor element; `true` marks membership in the low-magnitude
/// (left) mode of a bi-modal gradient.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ZeroMask {
    pub bits: Vec<bool>,
}

impl ZeroMask {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    schema: String,
    layer_id: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = OsString::from(path.as_os_str());
    name.push(".json");
    PathBuf::from(name)
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn header(magic: &[u8; 4], count: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(magic);
    h[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[8..16].copy_from_slice(&count.to_le_bytes());
    h
}

/// Parses a header and returns `(count, payload)`.
fn split_header<'a>(path: &Path, bytes: &'a [u8], magic: &'static [u8; 4]) -> Result<(u64, &'a [u8])> {
    let expected = std::str::from_utf8(magic).unwrap_or("?");
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::BadMagic {
            path: path.to_owned(),
            expected,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            path: path.to_owned(),
            declared: 0,
            actual: 0,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_owned(),
            version,
        });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    Ok((count, &bytes[HEADER_LEN..]))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn encode_tensor_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(&header(TENSOR_MAGIC, values.len() as u64));
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor_bytes(path: &Path, bytes: &[u8]) -> Result<Vec<f32>> {
    let (count, payload) = split_header(path, bytes, TENSOR_MAGIC)?;
    let needed = count.checked_mul(4).ok_or_else(|| Error::CountMismatch {
        path: path.to_owned(),
        declared: count,
        actual: payload.len() as u64,
    })?;
    let have = payload.len() as u64;
    if have < needed {
        return Err(Error::TruncatedPayload {
            path: path.to_owned(),
            declared: count,
            actual: have / 4,
        });
    }
    if have > needed {
        return Err(Error::CountMismatch {
            path: path.to_owned(),
            declared: count,
            actual: have,
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    check_finite(&values)?;
    Ok(values)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorDump> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = decode_tensor_bytes(path, &bytes)?;

    let side = sidecar_path(path);
    let (layer_id, metadata) = match fs::read(&side) {
        Ok(raw) => {
            let meta: Sidecar = serde_json::from_slice(&raw).map_err(|e| Error::Sidecar {
                path: side.clone(),
                message: e.to_string(),
            })?;
            (meta.layer_id, meta.metadata)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => (String::new(), BTreeMap::new()),
        Err(e) => return Err(Error::io(side, e)),
    };

    Ok(TensorDump {
        values,
        layer_id,
        metadata,
    })
}

/// Writes the binary file, plus a sidecar when the dump carries a layer id or
/// metadata.
pub fn write_tensor(dump: &TensorDump, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    dump.validate()?;
    write_atomic(path, &encode_tensor_bytes(&dump.values))?;
    if !dump.layer_id.is_empty() || !dump.metadata.is_empty() {
        let side = Sidecar {
            schema: SIDECAR_SCHEMA.to_owned(),
            layer_id: dump.layer_id.clone(),
            metadata: dump.metadata.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&side).expect("sidecar serializes");
        json.push(b'\n');
        write_atomic(&sidecar_path(path), &json)?;
    }
    Ok(())
}

pub fn encode_mask_bytes(mask: &ZeroMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.len().div_ceil(8));
    out.extend_from_slice(&header(MASK_MAGIC, mask.len() as u64));
    for chunk in mask.bits.chunks(8) {
        let mut byte = 0u8;
        for (i, bit) in chunk.iter().enumerate() {
            if *bit {
                byte |= 0x80 >> i;
            }
        }
        out.push(byte);
    }
    out
}

pub fn decode_mask_bytes(path: &Path, bytes: &[u8]) -> Result<ZeroMask> {
    let (count, payload) = split_header(path, bytes, MASK_MAGIC)?;
    let needed = count.div_ceil(8);
    let have = payload.len() as u64;
    if have < needed {
        return Err(Error::TruncatedPayload {
            path: path.to_owned(),
            declared: count,
            actual: have * 8,
        });
    }
    if have > needed {
        return Err(Error::CountMismatch {
            path: path.to_owned(),
            declared: count,
            actual: have,
        });
    }
    let bits = (0..count as usize)
        .map(|i| payload[i / 8] & (0x80 >> (i % 8)) != 0)
        .collect();
    Ok(ZeroMask { bits })
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<ZeroMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask_bytes(path, &bytes)
}

pub fn write_mask(mask: &ZeroMask, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_mask_bytes(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn three_values_round_trip() {
        let dir = tmp();
        let p = dir.path().join("t.grd");
        let dump = TensorDump::new(vec![1.0, -2.0, 0.0]);
        write_tensor(&dump, &p).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(back.values, vec![1.0, -2.0, 0.0]);
        assert_eq!(back.element_count(), 3);
        assert!(!sidecar_path(&p).exists());
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_tensor_bytes(&[1.0]);
        assert_eq!(&bytes[..4], b"GRD1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[16..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn short_payload_is_truncation() {
        let mut bytes = encode_tensor_bytes(&[1.0, 2.0, 3.0]);
        bytes[8] = 4;
        let err = decode_tensor_bytes(Path::new("x"), &bytes).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { declared: 4, actual: 3, .. }), "{err}");
    }

    #[test]
    fn long_payload_is_count_mismatch() {
        let mut bytes = encode_tensor_bytes(&[1.0, 2.0, 3.0]);
        bytes[8] = 2;
        let err = decode_tensor_bytes(Path::new("x"), &bytes).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { .. }));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_tensor_bytes(&[1.0]);
        bytes[0] = b'X';
        assert!(matches!(
            decode_tensor_bytes(Path::new("x"), &bytes),
            Err(Error::BadMagic { .. })
        ));
        let mut bytes = encode_tensor_bytes(&[1.0]);
        bytes[4] = 2;
        assert!(matches!(
            decode_tensor_bytes(Path::new("x"), &bytes),
            Err(Error::UnsupportedVersion { version: 2, .. })
        ));
        assert!(matches!(
            decode_tensor_bytes(Path::new("x"), b"GR"),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn non_finite_rejected_with_index() {
        for bad in [f32::NAN, f32::INFINITY, f32::NEG_INFINITY] {
            let bytes = encode_tensor_bytes(&[0.5, 1.5, bad, 2.0]);
            match decode_tensor_bytes(Path::new("x"), &bytes) {
                Err(Error::NonFinite { index, .. }) => assert_eq!(index, 2),
                other => panic!("expected NonFinite, got {other:?}"),
            }
        }
    }

    #[test]
    fn empty_tensor_is_header_only() {
        let dir = tmp();
        let p = dir.path().join("e.grd");
        write_tensor(&TensorDump::new(vec![]), &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16);
        assert!(read_tensor(&p).unwrap().values.is_empty());
    }

    #[test]
    fn subnormal_bits_preserved() {
        let dir = tmp();
        let p = dir.path().join("s.grd");
        let sub = f32::from_bits(0x0000_0001);
        let neg_zero = -0.0f32;
        write_tensor(&TensorDump::new(vec![sub, neg_zero, f32::MIN_POSITIVE / 3.0]), &p).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(back.values[0].to_bits(), 1);
        assert_eq!(back.values[1].to_bits(), neg_zero.to_bits());
        assert_eq!(back.values[2].to_bits(), (f32::MIN_POSITIVE / 3.0).to_bits());
    }

    #[test]
    fn sidecar_carries_layer_and_metadata() {
        let dir = tmp();
        let p = dir.path().join("layer3.grd");
        let mut dump = TensorDump::new(vec![0.25; 4]);
        dump.layer_id = "layer3.conv2".into();
        dump.metadata.insert("mask".into(), "layer3.msk".into());
        write_tensor(&dump, &p).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), dump);
    }

    #[test]
    fn write_refuses_non_finite() {
        let dir = tmp();
        let p = dir.path().join("bad.grd");
        assert!(write_tensor(&TensorDump::new(vec![f32::NAN]), &p).is_err());
        assert!(!p.exists());
    }

    #[test]
    fn mask_round_trip_and_packing() {
        let dir = tmp();
        let p = dir.path().join("m.msk");
        let mask = ZeroMask {
            bits: vec![true, false, false, false, false, false, false, true, true],
        };
        write_mask(&mask, &p).unwrap();
        let raw = fs::read(&p).unwrap();
        assert_eq!(&raw[..4], b"MSK1");
        assert_eq!(&raw[16..], &[0b1000_0001, 0b1000_0000]);
        assert_eq!(read_mask(&p).unwrap(), mask);
        assert_eq!(mask.count_set(), 3);
    }

    #[test]
    fn mask_truncation_detected() {
        let mask = ZeroMask { bits: vec![true; 17] };
        let mut bytes = encode_mask_bytes(&mask);
        bytes.pop();
        assert!(matches!(
            decode_mask_bytes(Path::new("m"), &bytes),
            Err(Error::TruncatedPayload { .. })
        ));
    }
}
