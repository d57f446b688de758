//! Deterministic random-stream derivation.
//!
//! Every replication gets its own generator keyed on
//! (master seed, replication index, module tag) through a hash, so results
//! do not depend on scheduling or worker count.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

/// Derive an independent stream for `(master_seed, index)` under a module tag.
pub fn derive_stream(master_seed: u64, index: u64, tag: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(seed)
}
