//! Named random sub-streams derived from one global seed.
//!
//! Every consumer of randomness (weight init, batch sampling, restarts,
//! evaluation seeds) asks for its own stream by name, so adding a draw in one
//! place never shifts the numbers seen in another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stable 64-bit seed for `(global, stream)`.
pub fn derive_seed(global: u64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stream.as_bytes());
    let out = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&out[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(global: u64, name: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, name))
}
