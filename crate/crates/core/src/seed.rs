// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic random substreams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is a
//! pure function of the master seed and a short key path, so results never
//! depend on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `keys` into `master` one at a time.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(master: u64, keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, keys))
}

/// Key tags that keep substreams for different purposes apart.
pub mod tag {
    pub const CORRUPT: u64 = 1;
    pub const GENERATE: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SAMPLE: u64 = 5;
    pub const PROXY: u64 = 6;
}
