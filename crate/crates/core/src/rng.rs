//! Seed derivation and random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose
//! seed is derived with [`mix64`] from a master seed and the integer
//! coordinates of the draw (matrix size, rank, trial index, ...). Streams for
//! distinct coordinates never overlap, so trials can run on any number of
//! threads and still produce bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matcore::DenseMatrix;

/// Weyl increment of SplitMix64 (2^64 / golden ratio).
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer (Stafford variant 13).
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit seed.
///
/// `h_0 = master`, `h_{i+1} = splitmix64(h_i + GOLDEN_GAMMA * (i + 1) ^ splitmix64(w_i))`.
/// The position-dependent increment makes `mix64(s, &[a, b])` and
/// `mix64(s, &[b, a])` distinct.
pub fn mix64(master: u64, words: &[u64]) -> u64 {
    let mut h = master;
    for (i, &w) in words.iter().enumerate() {
        let inc = GOLDEN_GAMMA.wrapping_mul(i as u64 + 1);
        h = splitmix64(h.wrapping_add(inc) ^ splitmix64(w));
    }
    splitmix64(h)
}

/// Stream for the given master seed and coordinates.
pub fn stream(master: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(master, words))
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `rows x cols` matrix of i.i.d. standard normal entries, filled row-major.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| gaussian(rng)).collect();
    DenseMatrix::from_vec_unchecked(rows, cols, data)
}
