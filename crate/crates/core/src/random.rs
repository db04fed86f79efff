//! Seeded random matrices. All randomness in the crate flows through here so
//! that a seed fully determines every generated object.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Mat;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard Gaussian matrix.
pub fn randn(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut *rng))
}
