//! Stateless seed derivation.
//!
//! Every stochastic step (per-user split shuffles, per-trial model seeds, negative
//! sampling) draws from its own stream keyed by `(master, label, index)`, so results
//! do not depend on execution order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Mixes a master seed, a stream label and an index into a 64-bit seed.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = mix64(master.wrapping_add(GOLDEN));
    h = mix64(h ^ fnv1a(label));
    mix64(h ^ index.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019))
}

/// Generator seeded with [`derive_seed`].
pub fn derived_rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}
