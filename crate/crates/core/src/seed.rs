//! Seed derivation.
//!
//! Every random stream in the pipeline is seeded by hashing the top-level
//! seed together with a purpose label and any per-item keys, using 64-bit
//! FNV-1a. The scheme is stable across platforms and releases, so a run is
//! reproducible from its config and seed alone:
//!
//! ```text
//! derive(seed, ["split"])                       train/val/test assignment
//! derive(seed, ["augment", source_id, start_ms, branch])   per-clip noise
//! derive(seed, ["rebalance"])                   resampling choices
//! derive(seed, ["model"])                       weight init, shuffling, bootstraps
//! derive(seed, ["cv"])                          fold assignment
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a child seed from `seed` and an ordered list of keys.
pub fn derive<S: AsRef<str>>(seed: u64, keys: &[S]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    for k in keys {
        // Separator keeps ["ab","c"] and ["a","bc"] apart.
        h = fnv1a(h, &[0xff]);
        h = fnv1a(h, k.as_ref().as_bytes());
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng<S: AsRef<str>>(seed: u64, keys: &[S]) -> ChaCha8Rng {
    rng(derive(seed, keys))
}
