//! Named, seeded random streams.
//!
//! Every source of randomness in a run (weight init, sampler, augmentation,
//! dropout, synthetic data) draws from its own stream derived from the run
//! seed, a stream name and a list of indices. Streams are independent of one
//! another, so switching off one component never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives the stream `name[indices...]` of the run seeded with `seed`.
pub fn stream(seed: u64, name: &str, indices: &[u64]) -> StreamRng {
    // FNV-1a over the name keeps the derivation stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut state = splitmix64(seed ^ splitmix64(h));
    for &i in indices {
        state = splitmix64(state ^ splitmix64(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    ChaCha8Rng::seed_from_u64(state)
}
