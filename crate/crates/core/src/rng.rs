//! Seeded generators and deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the engine.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for row `index` of a batch drawn with `batch_seed`.
pub fn row_seed(batch_seed: u64, index: u64) -> u64 {
    mix64(mix64(batch_seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Sub-seed for a labelled stage of a run ("sim", "train", "sample", ...).
pub fn labeled_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(seed ^ mix64(h))
}
