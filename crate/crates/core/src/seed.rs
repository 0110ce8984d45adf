//! Deterministic seed derivation.
//!
//! Every random stream in the toolkit is derived from a master seed plus
//! a small tuple of indices (tree number, member number, repetition, ...),
//! so results never depend on the order in which parallel work runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and an index. Index 0 returns `seed`
/// unchanged so a single-member ensemble shares its seed with a bare model.
pub fn child(seed: u64, index: u64) -> u64 {
    if index == 0 {
        seed
    } else {
        mix(seed ^ index.wrapping_mul(GOLDEN))
    }
}

/// Derives a seed from a domain tag and a path of indices.
pub fn derive(seed: u64, domain: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix(seed ^ mix(domain)), |acc, &i| mix(acc ^ i.wrapping_mul(GOLDEN)))
}

/// ChaCha8 generator on stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
