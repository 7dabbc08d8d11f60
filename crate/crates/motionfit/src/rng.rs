//! Deterministic RNG substream derivation.
//!
//! Every randomized stage derives its own ChaCha8 stream from a master seed,
//! a domain tag and an index, so stages can run in any order (or in parallel)
//! without perturbing each other's draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; used as the integer hash for substream derivation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string, for turning domain tags into integers.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A ChaCha8 stream tied to (seed, tag, index).
pub fn substream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ fnv1a(tag.as_bytes()) ^ splitmix64(index));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Per-video generator stream: corpus_seed XOR hash(video_index), so each
/// video reproduces independently of generation order.
pub fn video_stream(corpus_seed: u64, video_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(corpus_seed ^ splitmix64(video_index))
}
