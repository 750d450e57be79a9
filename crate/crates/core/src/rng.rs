//! Seeded, portable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifies the random generator behind every seeded artifact. Stored in
/// manifests so a dataset can be traced to the exact algorithm.
pub const RNG_VERSION: &str = "chacha20/rand_chacha-0.9";

pub type SeededRng = ChaCha20Rng;

/// Generator for item `index` under master seed `seed`.
///
/// Each index gets its own ChaCha stream, so items can be produced in any
/// order or in parallel with identical results.
pub fn rng_for(seed: u64, index: u64) -> SeededRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
