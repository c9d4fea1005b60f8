//! Seeded random substreams.
//!
//! Every random quantity in the crate is drawn from
//! `ChaCha8Rng::seed_from_u64(mix(master, domain))` with the ChaCha stream
//! counter set to an item index (a score row, a replicate, ...). A given item
//! therefore sees the same numbers no matter how many other items are drawn or
//! in which order or on which thread they are drawn.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent purposes that draw randomness from the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Rows of the population standardized score matrix; index = row.
    Scores = 1,
    /// Derivation of per-replicate master seeds; index = replicate.
    Replicate = 2,
    /// Noise sweeps; the sample size is folded into the key.
    Noise = 3,
    ChiSquare = 4,
    Basis = 5,
    Wishart = 6,
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(master: u64, domain: Domain, salt: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(domain as u64)) ^ salt)
}

/// Generator for item `index` of `domain`.
pub fn substream(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    keyed_substream(master, domain, 0, index)
}

/// Like [`substream`] with an extra `salt` folded into the key, used when a
/// domain is further split (for instance by sample size).
pub fn keyed_substream(master: u64, domain: Domain, salt: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key(master, domain, salt));
    rng.set_stream(index);
    rng
}

/// Master seed for replicate `r` of an experiment.
pub fn replicate_seed(master: u64, r: u64) -> u64 {
    substream(master, Domain::Replicate, r).next_u64()
}
