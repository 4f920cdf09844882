//! Deterministic sub-seed derivation.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded through
//! [`rng`]. Sub-seeds are derived from the top-level seed by folding a list of
//! `u64` parts through SplitMix64:
//!
//! ```text
//! s = splitmix64(base)
//! for p in parts: s = splitmix64(s ^ p)
//! ```
//!
//! Strings (household ids) enter as their 64-bit FNV-1a hash.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Count;

pub(crate) const TAG_HOUSEHOLDS: u64 = 0x686f_7573_6568_6f6c; // "househol"
pub(crate) const TAG_HOLDOUT: u64 = 0x686f_6c64_6f75_7400; // "holdout"
pub(crate) const TAG_ROLES: u64 = 0x726f_6c65_7300_0000; // "roles"
pub(crate) const TAG_SYNTH: u64 = 0x7379_6e74_6800_0000; // "synth"

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |s, &p| splitmix64(s ^ p))
}

pub(crate) fn count_part(c: Count) -> u64 {
    match c {
        Count::N(n) => n as u64,
        Count::All => u64::MAX,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
