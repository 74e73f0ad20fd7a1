//! Seeded randomness.
//!
//! Every random choice in the crate is drawn from SplitMix64 (Steele, Lea and
//! Flood): the state starts at the seed, each step adds `0x9E3779B97F4A7C15`
//! and outputs the standard 64-bit finaliser of the new state. Derived draws
//! are defined here in terms of raw `u64` outputs so that other languages can
//! reproduce traces bit for bit:
//!
//! * fair coin: the top bit of one output;
//! * unit float: `(x >> 11) · 2⁻⁵³`;
//! * bounded integer below `k`: rejection sampling on `x mod k`, rejecting
//!   outputs `x ≥ 2⁶⁴ − (2⁶⁴ mod k)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(SplitMix64::seed_from_u64(seed))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    #[inline]
    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound`. Panics when `bound == 0`.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "empty range");
        let k = bound as u64;
        let zone = u64::MAX - (u64::MAX % k + 1) % k;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % k) as usize;
            }
        }
    }

    /// In-place Fisher–Yates shuffle, swapping position `i` (from the back)
    /// with a uniform index in `0..=i`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Seed for the `attempt`-th retry derived from a base seed.
pub fn derive_seed(base: u64, attempt: u64) -> u64 {
    let mut rng = SeededRng::new(base ^ attempt.wrapping_mul(0xA076_1D64_78BD_642F));
    rng.next_u64()
}
