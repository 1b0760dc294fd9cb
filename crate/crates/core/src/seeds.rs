//! Seed derivation.
//!
//! Every random stream in the toolkit is derived from a master seed through
//! [`derive`]. Training and test drops live in separate namespaces that occupy
//! the top byte of the per-sample seed, so the two sets can never collide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Namespace tag for training-set drops.
pub const TRAIN_NAMESPACE: u8 = 0x01;
/// Namespace tag for evaluation drops.
pub const TEST_NAMESPACE: u8 = 0x02;
/// Namespace tag for ad-hoc instances (tests, benchmarks).
pub const SCRATCH_NAMESPACE: u8 = 0x03;

const LOW_MASK: u64 = (1 << 56) - 1;

/// SplitMix64 finalizer.
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Combines two words into one seed.
pub fn derive(seed: u64, salt: u64) -> u64 {
    mix(seed ^ mix(salt.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Seed of drop `index` in `namespace`. The namespace occupies the top byte.
pub fn sample_seed(namespace: u8, master: u64, index: u64) -> u64 {
    ((namespace as u64) << 56) | (derive(master, index) & LOW_MASK)
}

pub fn namespace_of(seed: u64) -> u8 {
    (seed >> 56) as u8
}

/// Sub-streams of a single drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    UePositions = 1,
    Channels = 2,
    Noise = 3,
    Shuffle = 4,
    Init = 5,
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    derive(seed, stream as u64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
