//! Counter-based random numbers for reproducible synthesis.
//!
//! Every draw is a pure function of `(seed, counter)`: the generator is the
//! SplitMix64 output function evaluated at `key + (counter + 1) * GAMMA`,
//! where `key` is derived from the seed. Any sample can therefore be produced
//! without generating the ones before it, and parallel code reproduces the
//! serial stream exactly.
//!
//! Draw order used by the synthesis: on a grid of `len` points, sample `idx`
//! (row-major) of frame `f` uses counter `f * len + idx`. Frame 0 holds the
//! initial uniform phase, frame `i >= 1` the normal increments that produce
//! phase `i`.

use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x6A09_E667_F3BC_C909;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ SEED_SALT),
        }
    }

    #[inline(always)]
    pub fn bits(&self, counter: u64) -> u64 {
        mix64(
            self.key
                .wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)),
        )
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline(always)]
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * INV_2_53
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline(always)]
    pub fn open_uniform(&self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) as f64 + 0.5) * INV_2_53
    }

    /// Standard normal draw by inverting the normal CDF of one open uniform.
    #[inline]
    pub fn standard_normal(&self, counter: u64) -> f64 {
        -SQRT_2 * erfc_inv(2.0 * self.open_uniform(counter))
    }
}
