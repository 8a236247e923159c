//! Deterministic seed derivation and seeded RNG construction.
//!
//! Every random decision in the pipeline (splits, bootstrap resampling,
//! Poisson batches, Gaussian noise, per-column permutations, weight init)
//! draws from a ChaCha12 stream whose seed is derived from a master seed and
//! a fixed stream tag. The derivation is a frozen constant of the artifact:
//! reports and synthetic outputs are reproducible bit-for-bit from
//! (inputs, master seed) alone.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream tags for the pipeline's independent random decisions.
///
/// Column permutations use `COLUMN_BASE + column_index` so that appending a
/// column leaves every existing column's permutation unchanged.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const WARMUP: u64 = 6;
    pub const DOWNSTREAM: u64 = 7;
    pub const REPEAT_BASE: u64 = 0x1000;
    pub const COLUMN_BASE: u64 = 0x1_0000;
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; full-period mixing of a 64-bit state.
fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive the seed for one stream from the master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(master.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Seeded ChaCha12 RNG; the pipeline's only RNG construction.
pub fn seeded(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// RNG for a derived stream of the master seed.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha12Rng {
    seeded(derive_seed(master, stream))
}

/// Fisher-Yates shuffle driven by the given RNG.
pub fn shuffle_in_place<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// A uniform permutation of `0..n` for the given RNG.
pub fn permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle_in_place(&mut idx, rng);
    idx
}

/// FNV-1a over bytes; used to fingerprint configs and checkpoints in
/// provenance records.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable() {
        // Frozen: changing these breaks every recorded artifact.
        assert_eq!(derive_seed(0, 0), derive_seed(0, 0));
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_ne!(derive_seed(0, 0), derive_seed(1, 0));
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = seeded(7);
        let mut v: Vec<u32> = (0..50).collect();
        shuffle_in_place(&mut v, &mut rng);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<u32>>());
    }

    #[test]
    fn same_seed_same_permutation() {
        let a = permutation(20, &mut seeded(9));
        let b = permutation(20, &mut seeded(9));
        assert_eq!(a, b);
    }

    #[test]
    fn fingerprint_differs_on_content() {
        assert_ne!(fingerprint(b"a"), fingerprint(b"b"));
    }
}
