//! Shared fixtures for the benchmarks.

use prac_core::FieldMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rows: usize, cols: usize, seed: u64) -> FieldMatrix {
    FieldMatrix::random(rows, cols, &mut rng(seed))
}
