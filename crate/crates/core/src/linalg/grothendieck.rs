//! Symmetric Grothendieck factorization `H = D T D`.
//!
//! `D = diag(d)` is nonnegative with `Σ d_j² = 1` and `‖T‖` is driven down
//! towards its minimum, which lies in `[‖H‖∞→1, 2‖H‖∞→1]`.
//!
//! With `w = d²`, a level `c` is achievable iff some `w` in the simplex has
//! `c·diag(w) − H ⪰ 0` and `c·diag(w) + H ⪰ 0`. For fixed `c` this is the
//! sublevel test `min_w f_c(w) ≤ 0` of the convex function
//!
//! ```text
//! f_c(w) = max(λ_max(H − c·diag(w)), λ_max(−H − c·diag(w)))
//! ```
//!
//! which is minimised by projected subgradient steps. The subgradient with
//! respect to `w_j` is `−c·v_j²`, `v` the top eigenvector of the active
//! branch. Linearising at any iterate also gives a lower bound on
//! `min_w f_c`; once that bound is positive the level is certified
//! infeasible and the probe stops early. Levels are bisected.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{
    ensure_finite, ensure_symmetric, inf_to_one_norm_auto, sym_eigen_desc, sym_spectral_norm, DenseMatrix, NormBracket,
    DEFAULT_EXACT_THRESHOLD,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizeOptions {
    /// Relative width at which bisection stops.
    pub tol: f64,
    /// Subgradient steps per feasibility probe.
    pub max_steps: usize,
    /// Dimension up to which the ∞→1 norm is enumerated exactly.
    pub exact_threshold: usize,
}

impl Default for FactorizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_steps: 5000,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationResult {
    /// Diagonal of `D`.
    pub diag: DVector<f64>,
    /// `T`, zero outside the support of `diag`.
    pub core: DenseMatrix,
    /// `‖T‖`, computed directly from `core`.
    pub certified_norm_bound: f64,
    /// The ∞→1 norm of the input used to set the bisection range.
    pub input_norm: NormBracket,
    /// Number of feasibility probes run.
    pub probes: usize,
}

impl FactorizationResult {
    /// `D T D`, for checking against the input.
    pub fn reconstruct(&self) -> DenseMatrix {
        let d = &self.diag;
        DenseMatrix::from_fn(self.core.nrows(), self.core.ncols(), |i, j| {
            d[i] * self.core[(i, j)] * d[j]
        })
    }
}

pub fn grothendieck_factorize(h: &DenseMatrix, opts: &FactorizeOptions) -> Result<FactorizationResult> {
    ensure_finite(h, "factorization input")?;
    ensure_symmetric(h)?;
    let s = h.nrows();
    if s == 0 {
        return Err(Error::EmptySelection);
    }
    let input_norm = inf_to_one_norm_auto(h, opts.exact_threshold)?;
    if input_norm.upper == 0.0 {
        return Ok(FactorizationResult {
            diag: DVector::from_element(s, (1.0 / s as f64).sqrt()),
            core: DenseMatrix::zeros(s, s),
            certified_norm_bound: 0.0,
            input_norm,
            probes: 0,
        });
    }

    // Symmetrise exactly so eigen-solves see a symmetric matrix.
    let h = (h + h.transpose()) * 0.5;
    let mut probes = 0;
    let cap = 2.0 * input_norm.upper * (1.0 + opts.tol);
    let mut w_best = vec![1.0 / s as f64; s];
    probes += 1;
    match probe(&h, cap, w_best.clone(), opts.max_steps) {
        Probe::Feasible(w) => w_best = w,
        Probe::Infeasible { residual, w, .. } => {
            return Err(Error::Infeasible {
                level: cap,
                residual,
                best_weights: w,
            })
        }
    }
    let mut hi = core_norm(&h, &w_best).min(cap);
    let mut lo = input_norm.lower.min(hi);
    let mut stalls = 0;
    while hi - lo > opts.tol * hi && stalls < MAX_STALLS {
        let mid = 0.5 * (lo + hi);
        probes += 1;
        match probe(&h, mid, w_best.clone(), opts.max_steps) {
            Probe::Feasible(w) => {
                hi = core_norm(&h, &w).min(mid);
                w_best = w;
            }
            Probe::Infeasible { certified, .. } => {
                lo = mid;
                if !certified {
                    stalls += 1;
                }
            }
        }
    }

    let diag = DVector::from_iterator(s, w_best.iter().map(|&w| w.max(0.0).sqrt()));
    let core = DenseMatrix::from_fn(s, s, |i, j| {
        if diag[i] > 0.0 && diag[j] > 0.0 {
            h[(i, j)] / (diag[i] * diag[j])
        } else {
            0.0
        }
    });
    let certified_norm_bound = sym_spectral_norm(&core);
    Ok(FactorizationResult {
        diag,
        core,
        certified_norm_bound,
        input_norm,
        probes,
    })
}

enum Probe {
    Feasible(Vec<f64>),
    /// `certified` is false when the step budget ran out without a proof.
    Infeasible {
        residual: f64,
        w: Vec<f64>,
        certified: bool,
    },
}

/// Uncertified probes tolerated before bisection stops at solver resolution.
const MAX_STALLS: usize = 2;

/// `‖D⁻¹ H D⁻¹‖` on the support of `w`, `+∞` if `H` has mass off the support.
fn core_norm(h: &DenseMatrix, w: &[f64]) -> f64 {
    let s = h.nrows();
    let scale = h.amax();
    for i in 0..s {
        if w[i] <= 0.0 && (0..s).any(|j| h[(i, j)].abs() > 1e-14 * scale) {
            return f64::INFINITY;
        }
    }
    let t = DenseMatrix::from_fn(s, s, |i, j| {
        if w[i] > 0.0 && w[j] > 0.0 {
            h[(i, j)] / (w[i] * w[j]).sqrt()
        } else {
            0.0
        }
    });
    sym_spectral_norm(&t)
}

fn top_eigenpair(m: &DenseMatrix) -> (f64, DVector<f64>) {
    let (vals, vecs) = sym_eigen_desc(m);
    (vals[0], vecs.column(0).into_owned())
}

fn probe(h: &DenseMatrix, c: f64, mut w: Vec<f64>, max_steps: usize) -> Probe {
    let s = h.nrows();
    let mut best_residual = f64::INFINITY;
    let mut best_w = w.clone();
    // Step-weighted averages of the dual rank-one matrices ±vvᵀ, kept as
    // ⟨X, H⟩ and diag(X). Any such average X gives
    // min_w f_c(w) ≥ ⟨X, ±H⟩ − c·max_j X_jj.
    let mut dual_inner = 0.0;
    let mut dual_diag = vec![0.0; s];
    let mut dual_weight = 0.0;
    for step in 1..=max_steps {
        let mut upper = h.clone();
        let mut lower = -h.clone();
        for j in 0..s {
            upper[(j, j)] -= c * w[j];
            lower[(j, j)] -= c * w[j];
        }
        let (l1, v1) = top_eigenpair(&upper);
        let (l2, v2) = top_eigenpair(&lower);
        let (f, v, branch) = if l1 >= l2 { (l1, v1, 1.0) } else { (l2, v2, -1.0) };
        if f < best_residual {
            best_residual = f;
            best_w.clone_from(&w);
        }
        if f <= 0.0 {
            return Probe::Feasible(w);
        }
        let v2sq: Vec<f64> = v.iter().map(|x| x * x).collect();

        // Linearisation at the current iterate.
        let vmax = v2sq.iter().fold(0.0_f64, |m, &x| m.max(x));
        let linear_bound = f + c * v2sq.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - c * vmax;

        // Polyak step towards {f ≤ 0} with a small overshoot, floored by a
        // diminishing 1/√t schedule.
        let g2: f64 = c * c * v2sq.iter().map(|x| x * x).sum::<f64>();
        let polyak = (f + 1e-3 * c / s as f64) / g2;
        let eta = polyak.max(1e-2 / (c * (step as f64).sqrt()));

        dual_inner += eta * branch * v.dot(&(h * &v));
        for (acc, x) in dual_diag.iter_mut().zip(&v2sq) {
            *acc += eta * x;
        }
        dual_weight += eta;
        let dmax = dual_diag.iter().fold(0.0_f64, |m, &x| m.max(x));
        let dual_bound = (dual_inner - c * dmax) / dual_weight;

        if linear_bound > 0.0 || dual_bound > 0.0 {
            return Probe::Infeasible {
                residual: best_residual,
                w: best_w,
                certified: true,
            };
        }
        for j in 0..s {
            w[j] += eta * c * v2sq[j];
        }
        project_simplex(&mut w);
    }
    Probe::Infeasible {
        residual: best_residual,
        w: best_w,
        certified: false,
    }
}

/// Euclidean projection onto `{w ≥ 0, Σ w = 1}`.
pub(crate) fn project_simplex(w: &mut [f64]) {
    let mut sorted: Vec<f64> = w.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in w.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inf_to_one_norm, NormMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(h: &DenseMatrix, f: &FactorizationResult) {
        let trace: f64 = f.diag.iter().map(|d| d * d).sum();
        assert!((trace - 1.0).abs() < 1e-8, "trace {trace}");
        assert!(f.diag.iter().all(|&d| d >= 0.0));
        let recon = f.reconstruct();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                if f.diag[i] > 0.0 && f.diag[j] > 0.0 {
                    assert!((recon[(i, j)] - h[(i, j)]).abs() < 1e-8);
                }
            }
        }
        let exact = inf_to_one_norm(h, NormMode::default()).unwrap().lower;
        assert!(f.certified_norm_bound <= 2.0 * exact * (1.0 + 1e-4) + 1e-12);
        assert!(f.certified_norm_bound >= exact * (1.0 - 1e-9));
        assert!((sym_spectral_norm(&f.core) - f.certified_norm_bound).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let h = DenseMatrix::zeros(3, 3);
        let f = grothendieck_factorize(&h, &FactorizeOptions::default()).unwrap();
        let third = (1.0_f64 / 3.0).sqrt();
        assert!(f.diag.iter().all(|&d| (d - third).abs() < 1e-15));
        assert_eq!(f.core, DenseMatrix::zeros(3, 3));
        assert_eq!(f.certified_norm_bound, 0.0);
    }

    #[test]
    fn two_by_two_swap() {
        let a = 0.7;
        let h = DenseMatrix::from_row_slice(2, 2, &[0.0, a, a, 0.0]);
        let f = grothendieck_factorize(&h, &FactorizeOptions::default()).unwrap();
        let half = 0.5_f64.sqrt();
        assert!((f.diag[0] - half).abs() < 1e-6 && (f.diag[1] - half).abs() < 1e-6);
        assert!((f.core[(0, 1)] - 2.0 * a).abs() < 1e-5);
        assert!((f.certified_norm_bound - 2.0 * a).abs() < 1e-5);
        // ‖T‖ = 2a sits inside [‖H‖∞→1, 2‖H‖∞→1] = [2a, 4a].
        assert!(f.certified_norm_bound <= 4.0 * a);
        check(&h, &f);
    }

    #[test]
    fn random_zero_diagonal_s8() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let mut h = DenseMatrix::zeros(8, 8);
            for i in 0..8 {
                for j in (i + 1)..8 {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
            let f = grothendieck_factorize(&h, &FactorizeOptions::default()).unwrap();
            check(&h, &f);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let h = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            grothendieck_factorize(&h, &FactorizeOptions::default()),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn simplex_projection() {
        let mut w = vec![0.5, 0.5, 0.5];
        project_simplex(&mut w);
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let mut w = vec![2.0, 0.0, -1.0];
        project_simplex(&mut w);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }
}
