//! Seeded, splittable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream. ChaCha
//! is counter based: a 64-bit seed fixes the key and a 64-bit stream id
//! selects an independent keystream, so `stream(seed, k)` can be
//! materialized on any thread without coordination. The convention is:
//!
//! * `stream(seed, k)` with `k` the trial, row, restart or block index;
//! * `derive(seed, tag)` to build a child seed when a trial needs its own
//!   family of streams (e.g. trial `k` samples an instance and then runs a
//!   solver with per-restart streams).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// The `index`-th stream of the family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed for a sub-family. SplitMix64 finalizer over `seed` and `tag`.
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
