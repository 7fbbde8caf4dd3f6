//! Seed derivation. Every random draw in the crate comes from a ChaCha
//! stream keyed by a seed derived from the master seed and an identifier
//! path, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed = hash(master, ids...)`
pub fn derive(master: u64, ids: &[u64]) -> u64 {
    ids.iter()
        .fold(splitmix64(master), |acc, &id| splitmix64(acc ^ splitmix64(id)))
}

/// Stable 64-bit id for a short string tag (FNV-1a).
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
