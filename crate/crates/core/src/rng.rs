//! Seeded, splittable random streams.
//!
//! Every random draw in a run is taken from a stream identified by the run
//! seed plus a short tag path (purpose, step, view). Streams never depend on
//! the order in which other streams were consumed, so results do not change
//! with internal parallelism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Grid;

pub type Rng = ChaCha8Rng;

/// Stream purposes.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const RENOISE: u64 = 2;
    pub const BACKGROUND: u64 = 3;
    pub const DDIM: u64 = 4;
    pub const JITTER: u64 = 5;
    pub const ENCODE: u64 = 6;
    pub const FIELD_INIT: u64 = 7;
    pub const DISTILL: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for `seed` and a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Derives an independent generator for `seed` and a tag path.
pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

pub fn standard_normal(rng: &mut Rng) -> f32 {
    StandardNormal.sample(rng)
}

/// Grid of i.i.d. standard normal samples.
pub fn normal_grid(height: usize, width: usize, channels: usize, rng: &mut Rng) -> Grid {
    let data = (0..height * width * channels)
        .map(|_| standard_normal(rng))
        .collect();
    Grid::from_vec(height, width, channels, data).expect("length matches")
}
