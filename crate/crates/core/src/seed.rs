//! Seed derivation.
//!
//! Every random choice in the toolkit draws from a ChaCha8 stream whose
//! seed is `xxh3_64(label, seed = parent)`. Keying by label means adding,
//! removing or reordering one consumer never shifts another's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64_with_seed;

pub fn derive_seed(parent: u64, label: &str) -> u64 {
    xxh3_64_with_seed(label.as_bytes(), parent)
}

pub fn rng_for(parent: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, label))
}
