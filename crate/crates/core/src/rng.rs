//! Seed derivation and stream splitting.
//!
//! Every random decision in the crate descends from a single `u64` master
//! seed through [`mix`], a splitmix64-based combiner. We deliberately avoid
//! `std::hash` here: `DefaultHasher` is not guaranteed stable across Rust
//! releases, and reproducibility across builds is part of the output
//! contract.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep unrelated consumers of the same master seed decorrelated.
pub mod tag {
    pub const MAP: u64 = 0x4d41_5030;
    pub const DEVICES: u64 = 0x4445_5643;
    pub const MOBILITY: u64 = 0x4d4f_4249;
    pub const MEANFIELD: u64 = 0x4d46_4c44;
    pub const SWEEP_CELL: u64 = 0x4357_454c;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a master seed with a list of words (domain tag, cell index,
/// replicate index, ...) into a derived seed. Order-sensitive.
pub fn mix(master: u64, words: &[u64]) -> u64 {
    let mut acc = splitmix64(master);
    for &w in words {
        acc = splitmix64(acc ^ splitmix64(w));
    }
    acc
}

/// Root generator for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent per-entity stream of a shared seed. ChaCha streams are
/// cryptographically decorrelated, so every agent can own one without any
/// cross-talk no matter how many draws its neighbours consume.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
