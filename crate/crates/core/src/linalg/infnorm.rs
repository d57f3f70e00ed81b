//! The ∞→1 operator norm `max_{‖x‖∞ = 1} ‖Hx‖₁`.
//!
//! The maximum is attained at a sign vector, so for small matrices it is
//! computed by enumeration. Larger matrices get a certified bracket.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ensure_square, spectral_norm, DenseMatrix, DEFAULT_EXACT_THRESHOLD};
use crate::error::{Error, Result};

/// Enclosure of the ∞→1 norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBracket {
    /// Best value found over sign vectors.
    pub lower: f64,
    /// Certified upper bound.
    pub upper: f64,
    /// True when `lower == upper` by enumeration.
    pub exact: bool,
}

impl NormBracket {
    /// Point estimate used by callers that need a single number.
    pub fn value(&self) -> f64 {
        self.lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormMode {
    /// Enumerate sign vectors; refuses matrices larger than `max_dim`.
    Exact { max_dim: usize },
    /// Local search lower bound plus analytic upper bound.
    Bracket { restarts: usize, seed: u64 },
}

impl Default for NormMode {
    fn default() -> Self {
        NormMode::Exact {
            max_dim: DEFAULT_EXACT_THRESHOLD,
        }
    }
}

pub fn inf_to_one_norm(h: &DenseMatrix, mode: NormMode) -> Result<NormBracket> {
    ensure_square(h)?;
    let s = h.nrows();
    if s == 0 || h.iter().all(|&x| x == 0.0) {
        return Ok(NormBracket {
            lower: 0.0,
            upper: 0.0,
            exact: true,
        });
    }
    match mode {
        NormMode::Exact { max_dim } => {
            if s > max_dim {
                return Err(Error::TooLargeForEnumeration {
                    size: s,
                    limit: max_dim,
                });
            }
            let v = enumerate(h);
            Ok(NormBracket {
                lower: v,
                upper: v,
                exact: true,
            })
        }
        NormMode::Bracket { restarts, seed } => Ok(bracket(h, restarts, seed)),
    }
}

/// Exact when `s ≤ exact_threshold`, bracketed otherwise.
pub fn inf_to_one_norm_auto(h: &DenseMatrix, exact_threshold: usize) -> Result<NormBracket> {
    if h.nrows() <= exact_threshold {
        inf_to_one_norm(
            h,
            NormMode::Exact {
                max_dim: exact_threshold,
            },
        )
    } else {
        inf_to_one_norm(
            h,
            NormMode::Bracket {
                restarts: 64,
                seed: 0x5eed,
            },
        )
    }
}

/// Gray-code walk over `{±1}^s` with the first sign pinned to `+1`
/// (`‖H(−x)‖₁ = ‖Hx‖₁`). `Hx` is updated one column at a time and rebuilt
/// periodically to keep rounding drift bounded.
fn enumerate(h: &DenseMatrix) -> f64 {
    let s = h.nrows();
    if s == 1 {
        return h[(0, 0)].abs();
    }
    let free = s - 1;
    let mut x = vec![1.0_f64; s];
    let mut hx: Vec<f64> = (0..s).map(|i| h.row(i).sum()).collect();
    let mut best = l1(&hx);
    let total: u64 = 1u64 << free;
    for step in 1..total {
        // Gray code: flip the bit at the position of the lowest set bit.
        let bit = step.trailing_zeros() as usize + 1;
        let delta = -2.0 * x[bit];
        x[bit] = -x[bit];
        if step % 4096 == 0 {
            for (i, v) in hx.iter_mut().enumerate() {
                *v = (0..s).map(|j| h[(i, j)] * x[j]).sum();
            }
        } else {
            let col = h.column(bit);
            for (v, c) in hx.iter_mut().zip(col.iter()) {
                *v += delta * c;
            }
        }
        let val = l1(&hx);
        if val > best {
            best = val;
        }
    }
    best
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `max_{x,y} yᵀHx` by alternating sign updates; each step is monotone.
fn local_search(h: &DenseMatrix, mut x: Vec<f64>) -> f64 {
    let s = h.nrows();
    let mut best = f64::NEG_INFINITY;
    loop {
        let hx: Vec<f64> = (0..s).map(|i| (0..s).map(|j| h[(i, j)] * x[j]).sum()).collect();
        let val = l1(&hx);
        if val <= best + 1e-15 * val.abs().max(1.0) {
            return best.max(val);
        }
        best = val;
        let y: Vec<f64> = hx.iter().map(|&v| sign(v)).collect();
        x = (0..s).map(|j| sign((0..s).map(|i| h[(i, j)] * y[i]).sum())).collect();
    }
}

fn bracket(h: &DenseMatrix, restarts: usize, seed: u64) -> NormBracket {
    let s = h.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lower = local_search(h, vec![1.0; s]);
    for _ in 0..restarts {
        let x: Vec<f64> = (0..s).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        lower = lower.max(local_search(h, x));
    }
    let entry_sum: f64 = h.iter().map(|x| x.abs()).sum();
    let upper = (s as f64 * spectral_norm(h)).min(entry_sum).max(lower);
    NormBracket {
        lower,
        upper,
        exact: false,
    }
}
