//! Counter-based random streams.
//!
//! Every Monte-Carlo unit (a permutation replicate, a simulated dataset, an
//! MVN integration) gets its own ChaCha stream selected from a master seed and
//! a pair of indices, so results do not depend on evaluation order or on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes apart under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Replicate = 0x7265_706c,
    Dataset = 0x6461_7461,
    Mvn = 0x6d76_6e00,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream `(outer, inner)` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, outer: u32, inner: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain as u64)));
    rng.set_stream(((outer as u64) << 32) | inner as u64);
    rng
}

/// Stream for permutation `b` of imputation `m`.
pub fn replicate_rng(seed: u64, m: u32, b: u32) -> ChaCha8Rng {
    stream(seed, Domain::Replicate, m, b)
}
