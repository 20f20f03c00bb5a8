//! Seeded, splittable random streams.
//!
//! Every stream is keyed by `(seed, purpose, index, attempt)`, so work items can
//! run in any order or in parallel and still draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PURPOSE_FOLDS: u64 = 1;
pub const PURPOSE_TRAIN: u64 = 2;
pub const PURPOSE_TEST: u64 = 3;
pub const PURPOSE_CV: u64 = 4;

pub fn stream(seed: u64, purpose: u64, index: u64, attempt: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&attempt.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
