//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(key, index)`, so element `i` of a tensor
//! sees the same uniform no matter how the work is split across threads.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed) }
    }

    /// Derives an independent stream, e.g. one per repetition or per purpose.
    pub fn fork(&self, tag: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(tag.wrapping_add(GOLDEN_GAMMA))),
        }
    }

    #[inline]
    pub fn u64_at(&self, index: u64) -> u64 {
        mix64(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform_at(&self, index: u64) -> f64 {
        (self.u64_at(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller on the counter pair `(2i, 2i+1)`.
    #[inline]
    pub fn normal_at(&self, index: u64) -> f64 {
        let u1 = 1.0 - self.uniform_at(index.wrapping_mul(2)); // (0, 1]
        let u2 = self.uniform_at(index.wrapping_mul(2).wrapping_add(1));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[inline]
    pub fn sign_at(&self, index: u64) -> f64 {
        if self.u64_at(index) >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}
