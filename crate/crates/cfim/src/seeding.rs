//! Counter-based seed derivation for order-independent parallel trials.
//!
//! Trial `t` of stream `s` always draws from `rng(master, s, t)`, so work
//! can be distributed across any number of workers without changing any
//! random stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a stream id and a trial counter.
pub fn derive(master: u64, stream: u64, counter: u64) -> u64 {
    splitmix(splitmix(master ^ splitmix(stream)) ^ counter)
}

/// Deterministic per-trial generator.
pub fn trial_rng(master: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream, counter))
}
