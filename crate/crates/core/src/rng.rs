//! Counter-based per-frame random streams.
//!
//! Frame `k` of a run draws from a ChaCha stream keyed by `frame_seed(master, k)`,
//! so the realization of a frame never depends on which worker produced it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grid::Complex64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of frame `frame` in the run keyed by `master`.
pub fn frame_seed(master: u64, frame: u64) -> u64 {
    splitmix64(splitmix64(master) ^ frame.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub struct FrameRng(ChaCha8Rng);

impl FrameRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Circular complex Gaussian with E|z|² = 1.
    pub fn complex_gaussian(&mut self) -> Complex64 {
        let re: f64 = self.0.sample(StandardNormal);
        let im: f64 = self.0.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}
