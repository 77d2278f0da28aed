//! Deterministic stream derivation for parallel Monte Carlo.
//!
//! Every randomized operation takes a 64-bit seed. Replicate `b` draws from
//! the ChaCha12 stream with key `seed` and stream id `b`, so output never
//! depends on thread count or chunking. When one operation needs several
//! independent sources (data draws, a held-out dataset, per-refinement
//! penalty draws), it derives fresh keys with [`mix`], a SplitMix64 chain.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer; a bijection on u64 with good avalanche behavior.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a fresh seed from `(seed, tag)`; chain calls for deeper nesting.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

/// RNG for replicate `stream` under `seed`; disjoint streams are independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
