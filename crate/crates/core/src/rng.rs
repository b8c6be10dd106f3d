//! Seeded random streams.
//!
//! Every random draw in the lab comes from a ChaCha8 stream whose 64-bit seed
//! is derived from `(master_seed, purpose_tag, index)`:
//!
//! 1. the tag is hashed with 64-bit FNV-1a,
//! 2. `master_seed`, the tag hash and `index` are folded through SplitMix64
//!    finalizers (`x = mix(x ^ next)` for each word, starting from
//!    `mix(master_seed)`),
//! 3. the result seeds `ChaCha8Rng::seed_from_u64`.
//!
//! Streams for distinct cells never share state, so results do not depend on
//! scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier recorded in manifests so other implementations can reproduce
/// the streams.
pub const RNG_ALGORITHM: &str = "chacha8-seed_from_u64/splitmix64-fnv1a-v1";

pub type LabRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master_seed: u64, tag: &str, index: u64) -> u64 {
    let mut x = mix64(master_seed);
    x = mix64(x ^ fnv1a(tag.as_bytes()));
    mix64(x ^ index)
}

/// Derives a seed from several indices, e.g. `(num_states, alphabet, replicate)`.
pub fn derive_seed_multi(master_seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut x = derive_seed(master_seed, tag, indices.len() as u64);
    for &i in indices {
        x = mix64(x ^ i);
    }
    x
}

pub fn stream(master_seed: u64, tag: &str, index: u64) -> LabRng {
    LabRng::seed_from_u64(derive_seed(master_seed, tag, index))
}

pub fn stream_from_seed(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}
