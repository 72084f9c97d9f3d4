//! Seed fan-out.
//!
//! Every random stream in a run is keyed by the master seed and a path of
//! integer tags (split seed, client id, round, view, purpose). The key is
//! folded with SplitMix64: `h = mix(h ^ tag)` for each tag, starting from
//! `mix(master)`. The result seeds a ChaCha8 generator, so a stream depends
//! only on its key and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags used as the last component of a stream key.
pub mod purpose {
    pub const SPLIT: u64 = 1;
    pub const ENCODER_INIT: u64 = 2;
    pub const PREDICTOR_INIT: u64 = 3;
    pub const HEAD_INIT: u64 = 4;
    pub const AUGMENT: u64 = 5;
    pub const PARTICIPATION: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const EVAL: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |h, &t| splitmix64(h ^ t))
}

pub fn stream(master: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tags))
}
