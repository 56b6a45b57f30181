use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest mantissa width the f64 emulation can round exactly.
pub const MAX_MANTISSA_BITS: u32 = 52;
/// Largest exponent width whose clamp value `2^E_max` is a finite f64.
pub const MAX_EXPONENT_BITS: u32 = 10;

/// Sign/exponent/mantissa bit split, written `1-n2-n1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FpFormat {
    n1: u32,
    n2: u32,
}

impl FpFormat {
    pub fn new(n1: u32, n2: u32) -> Result<Self> {
        if n1 > MAX_MANTISSA_BITS {
            return Err(Error::domain(
                "mantissa_bits",
                format!("at most {MAX_MANTISSA_BITS} supported, got {n1}"),
            ));
        }
        if n2 > MAX_EXPONENT_BITS {
            return Err(Error::domain(
                "exponent_bits",
                format!("at most {MAX_EXPONENT_BITS} supported, got {n2}"),
            ));
        }
        Ok(Self { n1, n2 })
    }

    /// The format with `n2` exponent bits in an `N`-bit word.
    pub fn with_total(total_bits: u32, n2: u32) -> Result<Self> {
        if total_bits < 2 || n2 + 1 > total_bits {
            return Err(Error::domain(
                "format",
                format!("{n2} exponent bits do not fit in {total_bits} bits"),
            ));
        }
        Self::new(total_bits - 1 - n2, n2)
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.n1
    }

    pub fn exponent_bits(&self) -> u32 {
        self.n2
    }

    pub fn total_bits(&self) -> u32 {
        1 + self.n1 + self.n2
    }

    /// `2^(n2-1)`, or 0 when there are no exponent bits.
    pub fn e_max(&self) -> i32 {
        if self.n2 == 0 {
            0
        } else {
            1 << (self.n2 - 1)
        }
    }

    /// Mantissa grid spacing `2^-n1`.
    pub fn spacing(&self) -> f64 {
        (-(self.n1 as f64)).exp2()
    }
}

impl fmt::Display for FpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1-{}-{}", self.n2, self.n1)
    }
}

impl FromStr for FpFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain("format", format!("expected 1-<n2>-<n1>, got {s:?}"));
        let parts: Vec<&str> = s.trim().split('-').collect();
        let [sign, n2, n1] = parts.as_slice() else {
            return Err(bad());
        };
        if *sign != "1" {
            return Err(bad());
        }
        let n2: u32 = n2.parse().map_err(|_| bad())?;
        let n1: u32 = n1.parse().map_err(|_| bad())?;
        Self::new(n1, n2)
    }
}
