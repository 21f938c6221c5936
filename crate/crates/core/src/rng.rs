//! Named random sub-streams derived from a single root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream names used by the pipeline.
pub const SIMULATE: &str = "simulate";
pub const INIT: &str = "init";
pub const KMEANS: &str = "kmeans";
pub const LAYOUT: &str = "layout";

/// Returns an independent generator for `name` under `root`.
///
/// The same `(root, name)` pair always yields the same stream.
pub fn substream(root: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
