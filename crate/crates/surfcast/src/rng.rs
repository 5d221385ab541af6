//! Deterministic stream derivation.
//!
//! Replications, splits, and rolling shifts each get an independent ChaCha
//! stream derived from a master seed and a list of stream coordinates. The
//! derivation is a fixed splitmix64 fold, chosen over `std` hashers because
//! those are documented as unstable across releases and the study output must
//! be reproducible byte for byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `master` and the stream coordinates into a single 64-bit sub-seed.
///
/// Distinct coordinate lists give unrelated sub-seeds; the same inputs always
/// give the same output. Used both to label replications (the `seed` column in
/// study output) and as input to [`derive_rng`].
pub fn mix_seed(master: u64, stream: &[u64]) -> u64 {
    // Offset constant separates the empty stream from the raw master value.
    let mut state = master ^ 0x6A09_E667_F3BC_C909;
    let mut out = splitmix64(&mut state);
    for &word in stream {
        state ^= word.wrapping_mul(GOLDEN) ^ GOLDEN;
        out = splitmix64(&mut state);
    }
    out
}

/// Builds a ChaCha8 generator keyed by `master` and the stream coordinates.
///
/// The full 256-bit ChaCha key is filled from successive splitmix64 outputs of
/// the folded state, so generators for different coordinates are independent
/// streams rather than shifted copies of one another.
pub fn derive_rng(master: u64, stream: &[u64]) -> ChaCha8Rng {
    let mut state = mix_seed(master, stream);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
