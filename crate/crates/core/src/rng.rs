//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and draws from
//! [`Xoshiro256PlusPlus`], seeded through SplitMix64 (`seed_from_u64`).
//! Sub-streams are keyed as `derive_seed(root, label, index)`: the label is
//! hashed with 64-bit FNV-1a, combined with the root and index, and finished
//! with two SplitMix64 rounds. The same `(root, label, index)` always yields
//! the same stream, and streams for different keys are independent for all
//! practical purposes.

use rand::SeedableRng;
pub use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ fnv1a(label)) ^ index)
}

pub fn stream(root: u64, label: &str, index: u64) -> SimRng {
    rng_from_seed(derive_seed(root, label, index))
}
