//! Small deterministic PRNG for weight and test-input generation.
//!
//! SplitMix64 keeps seeded model construction bit-reproducible across
//! platforms and builds without pulling a randomness dependency into the
//! `no_std` core.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_unit<T: Scalar>(&mut self) -> T {
        // 53 mantissa bits, the same path for f32 and f64.
        let bits = self.next_u64() >> 11;
        T::from_f64(bits as f64 * (1.0 / (1u64 << 53) as f64))
    }

    /// Uniform in [lo, hi).
    pub fn next_range<T: Scalar>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * self.next_unit::<T>()
    }

    /// Uniform in [-limit, limit).
    pub fn next_symmetric<T: Scalar>(&mut self, limit: T) -> T {
        self.next_range(-limit, limit)
    }
}
