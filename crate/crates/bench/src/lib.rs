//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srcscreen::{DenseMatrix, HeadMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Symmetric with zero diagonal, as handed to the factorization.
pub fn sym_zero_diag(s: usize, seed: u64) -> DenseMatrix {
    let g = gaussian(s, s, &mut rng(seed));
    let mut h = (&g + g.transpose()) * 0.5;
    h.fill_diagonal(0.0);
    h
}

/// Unit columns drawn uniformly from the sphere in `R^k`.
pub fn sphere_heads(k: usize, m: usize, seed: u64) -> HeadMatrix {
    HeadMatrix::normalized(gaussian(k, m, &mut rng(seed))).expect("gaussian columns are nonzero")
}
