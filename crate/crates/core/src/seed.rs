//! Named random sub-streams derived from one master seed.
//!
//! Each consumer asks for its own stream by name, so adding a new consumer
//! never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Derives a 64-bit seed from a master seed and a stream name.
pub fn derive(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

pub fn stream(master: u64, name: &str) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive(master, name))
}

/// Per-trial seed for trial `index` of a run seeded with `master`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive(master, &format!("trial/{index}"))
}
