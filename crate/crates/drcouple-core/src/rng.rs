//! Deterministic seed derivation.
//!
//! Every run is driven by a single user seed; components derive their own
//! streams so that adding a method or reordering work never perturbs another
//! component's randomness.

use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// splitmix64 finalizer; decorrelates nearby seeds.
#[inline]
pub fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for a named stream of a run.
#[inline]
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream))
}

/// RNG for a named stream of a run.
pub fn stream_rng(seed: u64, stream: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(derive(seed, stream))
}

/// Stream tags used across the crate (stable identifiers, not indices).
pub mod streams {
    pub const OUTCOME_SAMPLER: u64 = 0x01;
    pub const PROPENSITY_SAMPLER: u64 = 0x02;
    pub const TILT: u64 = 0x03;
    pub const SENSITIVITY: u64 = 0x04;
    pub const BOOTSTRAP: u64 = 0x05;
    pub const DATA_GEN: u64 = 0x06;
    pub const NOISE_COVARIATES: u64 = 0x07;
    pub const SELECTION: u64 = 0x08;
}
