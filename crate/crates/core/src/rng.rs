//! Counter-based random streams.
//!
//! Every random quantity in a run is addressed by `(seed, stream, counter)`
//! and obtained by hashing that triple, so results never depend on traversal
//! order or on how replicas are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for per-site trap depths.
pub const STREAM_ENVIRONMENT: u64 = 0x656e_7669_726f_6e00;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a bijective avalanche mix of 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of `(seed, stream, counter)`.
#[inline]
pub fn counter_hash(seed: u64, stream: u64, counter: u64) -> u64 {
    let a = mix64(seed.wrapping_add(GOLDEN));
    let b = mix64(a ^ stream.wrapping_mul(GOLDEN));
    mix64(b.wrapping_add(counter.wrapping_mul(0xd1b5_4a32_d192_ed03)))
}

/// Uniform variate strictly inside (0, 1) built from the top 52 bits.
#[inline]
pub fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[inline]
pub fn counter_uniform(seed: u64, stream: u64, counter: u64) -> f64 {
    to_open_unit(counter_hash(seed, stream, counter))
}

/// FNV-1a, used to turn experiment names into stream tags.
pub fn tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for replica `index` of the experiment `kind`.
pub fn derive_seed(master: u64, kind: &str, index: u64) -> u64 {
    counter_hash(master, tag(kind), index)
}

/// Sequential generator owned by one replica.
pub fn stream_rng(master: u64, kind: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, kind, index))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
