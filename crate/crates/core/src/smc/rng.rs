//! Counter-based random streams: every particle on every day gets its own
//! generator derived from `(seed, day, index)`, so results do not depend on
//! how the particles are spread over threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Stream index reserved for the resampling draw of a day.
pub const RESAMPLE_STREAM: u64 = u64::MAX;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a `(day, index)` counter into a 64-bit stream key.
#[inline]
pub fn stream_key(seed: u64, day: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ day) ^ index)
}

#[inline]
pub fn stream_rng(seed: u64, day: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(stream_key(seed, day, index))
}
