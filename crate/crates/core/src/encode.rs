//! Prefix code for stochastically pruned tensors.
//!
//! | value        | code            |
//! |--------------|-----------------|
//! | `+0.0`       | `0`             |
//! | `+α`         | `100`           |
//! | `-α`         | `101`           |
//! | anything else| `11` + `w` bits |
//!
//! Stream file: `ENC1`, `α` as f32 LE, `w` as u8, element count as u64 LE,
//! then the code bits packed MSB-first with the last byte zero-padded.

use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::write_atomic;

pub const STREAM_MAGIC: &[u8; 4] = b"ENC1";
const HEADER_LEN: usize = 4 + 4 + 1 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStream {
    pub alpha: f32,
    pub width: u8,
    pub count: u64,
    pub bit_len: u64,
    pub bits: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SymbolCounts {
    pub zeros: u64,
    pub alphas: u64,
    pub passthrough: u64,
}

impl SymbolCounts {
    pub fn of(values: &[f32], alpha: f32) -> Self {
        let (pos, neg) = (alpha.to_bits(), (-alpha).to_bits());
        let mut c = Self::default();
        for v in values {
            match v.to_bits() {
                0 => c.zeros += 1,
                b if b == pos || b == neg => c.alphas += 1,
                _ => c.passthrough += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.zeros + self.alphas + self.passthrough
    }

    /// Exact code length in bits.
    pub fn stream_bits(&self, width: u8) -> u64 {
        self.zeros + 3 * self.alphas + (2 + width as u64) * self.passthrough
    }
}

fn check_width(width: u8) -> Result<()> {
    if width == 16 || width == 32 {
        Ok(())
    } else {
        Err(Error::Codec(format!("payload width must be 16 or 32, got {width}")))
    }
}

/// Mean code length per element.
pub fn compression_ratio(counts: SymbolCounts, width: u8) -> Result<f64> {
    check_width(width)?;
    if counts.total() == 0 {
        return Err(Error::domain("counts", "total must be > 0"));
    }
    Ok(counts.stream_bits(width) as f64 / counts.total() as f64)
}

struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    fn with_capacity(bits: u64) -> Self {
        Self {
            bytes: Vec::with_capacity(bits.div_ceil(8) as usize),
            len: 0,
        }
    }

    fn push(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            if self.len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> i) & 1 == 1 {
                let last = self.bytes.last_mut().expect("byte pushed above");
                *last |= 0x80 >> (self.len % 8);
            }
            self.len += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl BitReader<'_> {
    fn bit(&mut self) -> Option<u64> {
        if self.pos >= self.limit {
            return None;
        }
        let b = (self.bytes[(self.pos / 8) as usize] >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Some(b as u64)
    }

    fn take(&mut self, n: u32) -> Option<u64> {
        (0..n).try_fold(0u64, |acc, _| Some((acc << 1) | self.bit()?))
    }
}

pub fn encode_stream(values: &[f32], alpha: f32, width: u8) -> Result<EncodedStream> {
    check_width(width)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain("alpha", format!("must be > 0, got {alpha}")));
    }
    let counts = SymbolCounts::of(values, alpha);
    let (pos, neg) = (alpha.to_bits(), (-alpha).to_bits());
    let mut w = BitWriter::with_capacity(counts.stream_bits(width));
    for (i, v) in values.iter().enumerate() {
        match v.to_bits() {
            0 => w.push(0, 1),
            b if b == pos => w.push(0b100, 3),
            b if b == neg => w.push(0b101, 3),
            b => {
                w.push(0b11, 2);
                if width == 32 {
                    w.push(b as u64, 32);
                } else {
                    let h = f16::from_f32(*v);
                    if h.to_f32().to_bits() != b {
                        return Err(Error::Codec(format!(
                            "value {v} at index {i} is not exactly representable in 16 bits"
                        )));
                    }
                    w.push(h.to_bits() as u64, 16);
                }
            }
        }
    }
    debug_assert_eq!(w.len, counts.stream_bits(width));
    Ok(EncodedStream {
        alpha,
        width,
        count: values.len() as u64,
        bit_len: w.len,
        bits: w.bytes,
    })
}

pub fn decode_stream(stream: &EncodedStream) -> Result<Vec<f32>> {
    Ok(decode_counted(stream)?.0)
}

/// Decoded values and the number of bits consumed.
fn decode_counted(stream: &EncodedStream) -> Result<(Vec<f32>, u64)> {
    check_width(stream.width)?;
    let available = stream.bits.len() as u64 * 8;
    let mut r = BitReader {
        bytes: &stream.bits,
        pos: 0,
        limit: stream.bit_len.min(available),
    };
    let truncated = |i: u64| {
        Error::Codec(format!(
            "stream ends inside the code word of element {i} of {}",
            stream.count
        ))
    };
    // every code word is at least one bit
    let mut out = Vec::with_capacity(stream.count.min(r.limit) as usize);
    for i in 0..stream.count {
        let v = match r.bit().ok_or_else(|| truncated(i))? {
            0 => 0.0,
            _ => match r.bit().ok_or_else(|| truncated(i))? {
                0 => match r.bit().ok_or_else(|| truncated(i))? {
                    0 => stream.alpha,
                    _ => -stream.alpha,
                },
                _ => {
                    let payload = r.take(stream.width as u32).ok_or_else(|| truncated(i))?;
                    if stream.width == 32 {
                        f32::from_bits(payload as u32)
                    } else {
                        f16::from_bits(payload as u16).to_f32()
                    }
                }
            },
        };
        out.push(v);
    }
    Ok((out, r.pos))
}

impl EncodedStream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.bits.len());
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.push(self.width);
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    /// Parses a stream file. The bit length is recovered by walking the code
    /// words, so a short payload is reported as truncation and surplus bytes
    /// beyond the final padded byte are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Codec(format!(
                "stream header needs {HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != STREAM_MAGIC {
            return Err(Error::Codec("bad magic: expected \"ENC1\"".into()));
        }
        let alpha = f32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        let width = bytes[8];
        let count = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
        check_width(width)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Codec(format!("header alpha {alpha} is not > 0")));
        }
        let payload = &bytes[HEADER_LEN..];
        let mut probe = Self {
            alpha,
            width,
            count,
            bit_len: payload.len() as u64 * 8,
            bits: payload.to_vec(),
        };
        let (_, bit_len) = decode_counted(&probe)?;
        if bit_len.div_ceil(8) != payload.len() as u64 {
            return Err(Error::Codec(format!(
                "{} trailing bytes after the last code word",
                payload.len() as u64 - bit_len.div_ceil(8)
            )));
        }
        probe.bit_len = bit_len;
        Ok(probe)
    }
}

pub fn write_stream(stream: &EncodedStream, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &stream.to_bytes())
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<EncodedStream> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EncodedStream::from_bytes(&bytes)
}
