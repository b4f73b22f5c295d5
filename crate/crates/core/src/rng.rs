//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by (seed, restart, domain) and
//! selected by shot index, so a shot's randomness never depends on which
//! thread ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which party consumes a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Honest = 1,
    Eve = 2,
    Keys = 3,
}

pub fn stream(seed: u64, shot: u64, restart: u32, domain: Domain) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&restart.to_le_bytes());
    key[12] = domain as u8;
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(shot);
    rng
}
