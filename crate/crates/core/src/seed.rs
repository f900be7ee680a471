//! Deterministic generator streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose seed is
//! `master ^ splitmix64(index)`. Callers that need several independent
//! families of streams (inputs, features, noise, ...) first derive a family
//! master with [`domain`] and then index into it, so results never depend on
//! thread count or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    master ^ splitmix64(index)
}

pub fn stream(master: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(master, index))
}

/// Master seed of a named family of streams.
pub fn domain(master: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then mixed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}
