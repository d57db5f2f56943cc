//! Seed derivation.
//!
//! Every random draw in the pipeline comes from a [`ChaCha8Rng`] keyed by a
//! SplitMix64 hash of a parent seed and a stream tag. A sample seed is
//! derived from `(master seed, sample index, attempt)`, and each generator
//! inside a sample draws from its own stream, so results never depend on the
//! order in which samples or generators run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of a sample seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Geometry = 1,
    GlandField = 2,
    Scatterers = 3,
    Properties = 4,
    Bandpass = 5,
    ThermalNoise = 6,
    Split = 7,
    Transmit = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parent` and `tag` into a new 64-bit seed.
pub fn derive(parent: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Seed of sample `index` (retry `attempt`) under `master`.
pub fn sample_seed(master: u64, index: u64, attempt: u32) -> u64 {
    derive(derive(master, index), 0xA77E_0000 | attempt as u64)
}

/// Generator for one named stream of `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream as u64))
}

/// Generator for an indexed sub-stream, e.g. one per steering angle.
pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(derive(seed, stream as u64), index))
}
