//! Named, indexable random substreams derived from a single run seed.
//!
//! Every consumer of randomness (sampling, parameter init, shuffling, ...)
//! gets its own ChaCha8 stream keyed by `(seed, name)`; per-item streams
//! (one per episode, say) are selected with the ChaCha stream counter so
//! results never depend on evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SAMPLER: &str = "sampler";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const KMEANS: &str = "kmeans";

/// FNV-1a, 64-bit. Stable across platforms and compiler versions.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named sub-component, e.g. the dev-phase sampler.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a(name.as_bytes()).rotate_left(17))
}

/// Stream `index` of the substream called `name`.
pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a(name.as_bytes())));
    rng.set_stream(index);
    rng
}
