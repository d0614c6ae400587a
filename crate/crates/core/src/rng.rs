//! Seed handling.
//!
//! Every random stream is derived from a single master seed with
//! `derive_seed(master, stream, index)`, a SplitMix64 finaliser applied to
//! `master ^ (stream * 0x9E37_79B9_7F4A_7C15) ^ (index * 0xD1B5_4A32_D192_ED03)`.
//! Stream ids are the `STREAM_*` constants below; `index` is usually a
//! replicate counter. Results therefore depend only on the master seed, never
//! on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_BACKGROUND: u64 = 2;
pub const STREAM_KERNEL: u64 = 3;
pub const STREAM_BOOTSTRAP: u64 = 4;
pub const STREAM_BACKBONE: u64 = 5;
pub const STREAM_REPLICATE: u64 = 6;
pub const STREAM_SYNTH: u64 = 7;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(
        master
            ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03),
    )
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(master, stream, index))
}
