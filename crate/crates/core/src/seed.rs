//! Deterministic seed derivation.
//!
//! Every randomized component draws from a ChaCha8 stream whose seed is derived
//! from a master seed and a textual label, so independent parts of a run never
//! share a stream and adding a consumer never shifts another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `master` and a label.
pub fn derive(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, label: &str) -> ChaCha8Rng {
    rng(derive(master, label))
}
