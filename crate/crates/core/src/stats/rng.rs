//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `seed_from_u64(seed)` and
//! selected by a 64-bit stream id built from a tag in the high half and an
//! index (bootstrap trial, replication) in the low half. Streams never
//! depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_DESCRIPTION: &str = "chacha8; key=seed_from_u64(seed); stream=(tag<<32)|index";

/// Stream tags used across the crate.
pub mod tags {
    pub const GROUP_1: u32 = 1;
    pub const GROUP_2: u32 = 2;
    pub const RESAMPLE: u32 = 16;
    pub const SYNTH_DATASET: u32 = 32;
    pub const SYNTH_PREDICTIONS: u32 = 33;
    pub const ORACLE: u32 = 48;
}

pub fn stream(seed: u64, tag: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(tag) << 32) | u64::from(index));
    rng
}
