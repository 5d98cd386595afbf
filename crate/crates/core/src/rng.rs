//! Deterministic seed derivation.
//!
//! Every random stream in a sweep is seeded by a pure function of the base
//! seed, a stream tag and the grid/trial indices, so trials can run in any
//! order (or in parallel) and still reproduce bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::C64;

pub type SimRng = ChaCha8Rng;

/// Independent random streams used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Aoa = 1,
    Covariance = 2,
    Channel = 3,
    Measurement = 4,
    Training = 5,
    Rvq = 6,
    Calibration = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base`, `stream` and `indices` into a 64-bit seed.
pub fn derive_seed(base: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(base: u64, stream: Stream, indices: &[u64]) -> SimRng {
    rng_from_seed(derive_seed(base, stream, indices))
}

/// Circularly symmetric complex Gaussian sample, zero mean, unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn real_gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
