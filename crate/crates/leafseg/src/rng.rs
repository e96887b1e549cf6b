//! Seeded randomness used across the crate.
//!
//! Everything that needs random numbers draws from xoshiro256**, seeded
//! through SplitMix64 (`seed_from_u64`). Derived values (floats, bounded
//! integers, shuffles) are computed here from raw `next_u64` output so
//! results stay identical across platforms and dependency upgrades.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// Deterministic RNG stream.
pub struct Stream {
    inner: Xoshiro256StarStar,
}

impl Stream {
    /// Seed a stream. Identical seeds produce identical output everywhere.
    pub fn new(seed: u64) -> Self {
        Stream {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Derive an independent stream for a named sub-purpose.
    ///
    /// Mixing a fixed tag keeps e.g. background noise and leaf geometry
    /// decoupled: drawing more of one never shifts the other.
    pub fn derive(seed: u64, tag: u64) -> Self {
        Stream::new(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    ///
    /// Plain modulo; the bias at n << 2^64 is far below anything
    /// observable here and the mapping is trivially portable.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        self.next_u64() % n
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn range_u64(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi);
        lo + self.below(hi - lo + 1)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
