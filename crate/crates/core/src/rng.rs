//! Keyed random streams.
//!
//! Every random quantity is drawn from a ChaCha stream whose seed is a hash of
//! `(seed, domain, trial, t, h)`. A round can be replayed on its own, in any
//! order, from any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Link failure draws. Gain agreement rounds use keys `(t, ⊥)` and consensus
/// sub-rounds `(t, h)`, so the two processes never share a draw.
pub const DOMAIN_LINK: u64 = 0x4c49_4e4b;
/// Process and measurement noise.
pub const DOMAIN_PLANT: u64 = 0x504c_414e;
/// Generic Monte-Carlo estimators.
pub const DOMAIN_MC: u64 = 0x4d43_4d43;
/// Derivation of per-trial seeds.
pub const DOMAIN_TRIAL: u64 = 0x5452_4941;

/// Round identifier; `h = None` marks a round outside the consensus loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoundKey {
    pub t: u64,
    pub h: Option<u32>,
}

impl RoundKey {
    pub fn outer(t: u64) -> Self {
        RoundKey { t, h: None }
    }

    pub fn inner(t: u64, h: u32) -> Self {
        RoundKey { t, h: Some(h) }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key tuple.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x2545_f491_4f6c_dd1d, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Seed for trial `trial` derived from a base seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    mix(&[seed, DOMAIN_TRIAL, trial])
}

pub fn stream(seed: u64, domain: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, domain, trial]))
}

pub fn round_stream(seed: u64, domain: u64, key: RoundKey) -> ChaCha8Rng {
    let h = match key.h {
        None => u64::MAX,
        Some(h) => h as u64,
    };
    ChaCha8Rng::seed_from_u64(mix(&[seed, domain, key.t, h]))
}
