//! Matrix functionals used by the screening algorithms.
//!
//! Everything here is a pure function of its inputs. Dense storage is
//! nalgebra's column-major [`DMatrix`]; the screening code only ever needs
//! small and medium sized matrices (tens to a few thousand columns).

mod grothendieck;
mod infnorm;

pub use grothendieck::{grothendieck_factorize, FactorizationResult, FactorizeOptions};
pub use infnorm::{inf_to_one_norm, inf_to_one_norm_auto, NormBracket, NormMode};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Tolerance on `‖BᵀB − I‖` wherever an orthonormal basis is consumed.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// `λ_min ≤ SINGULAR_RATIO · λ_max` is reported as an infinite condition number.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Largest dimension for which the ∞→1 norm is computed by sign enumeration.
pub const DEFAULT_EXACT_THRESHOLD: usize = 20;

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing order.
///
/// Ties keep the order produced by the underlying solver, so the result is
/// deterministic for a given input.
pub fn sym_eigen_desc(m: &DenseMatrix) -> (DVector<f64>, DenseMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DenseMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, nonincreasing.
pub fn sym_eigenvalues_desc(m: &DenseMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Spectral norm of a symmetric matrix: the largest eigenvalue magnitude.
pub fn sym_spectral_norm(h: &DenseMatrix) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    h.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, &l| acc.max(l.abs()))
}

/// Spectral norm of a rectangular matrix, through the Gram matrix of the
/// smaller side.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let top = gram.symmetric_eigenvalues().iter().fold(0.0_f64, |acc, &l| acc.max(l));
    top.max(0.0).sqrt()
}

pub fn ensure_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} has non-finite entries")))
    }
}

pub fn ensure_square(a: &DenseMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// Largest absolute entry of `a − aᵀ`.
pub fn asymmetry(a: &DenseMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn ensure_symmetric(a: &DenseMatrix) -> Result<()> {
    ensure_square(a)?;
    let scale = a.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    let asym = asymmetry(a);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// `‖A‖_F² / ‖A‖²`.
pub fn stable_rank(a: &DenseMatrix) -> Result<f64> {
    let fro2 = a.norm_squared();
    if fro2 == 0.0 {
        return Err(Error::Domain("stable rank of a zero matrix".into()));
    }
    let op = spectral_norm(a);
    Ok(fro2 / (op * op))
}

/// Sum of the Euclidean norms of the columns.
pub fn column_norm(h: &DenseMatrix) -> f64 {
    h.column_iter().map(|c| c.norm()).sum()
}

/// `λ_max(A_S A_Sᵀ) / λ_min(A_S A_Sᵀ)`, or `+∞` when the Gram is numerically
/// singular.
pub fn gram_condition_number(a_s: &DenseMatrix) -> Result<f64> {
    if a_s.ncols() == 0 {
        return Err(Error::EmptySelection);
    }
    let gram = a_s * a_s.transpose();
    Ok(condition_number_sym(&gram))
}

/// Condition number of a symmetric PSD matrix with the singular sentinel.
pub fn condition_number_sym(gram: &DenseMatrix) -> f64 {
    let ev = sym_eigenvalues_desc(gram);
    let (max, min) = (ev[0], ev[ev.len() - 1]);
    if max <= 0.0 || min <= SINGULAR_RATIO * max {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `‖BᵀB − I‖` in spectral norm.
pub fn orthonormality_error(b: &DenseMatrix) -> f64 {
    let mut g = b.transpose() * b;
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    sym_spectral_norm(&g)
}

pub fn check_orthonormal(b: &DenseMatrix) -> Result<()> {
    let deviation = orthonormality_error(b);
    if deviation.is_finite() && deviation <= ORTHONORMAL_TOL {
        Ok(())
    } else {
        Err(Error::NotOrthonormal { deviation })
    }
}

/// `‖B₁B₁ᵀ − B₂B₂ᵀ‖`, the sine of the largest principal angle between the
/// two column spans.
pub fn principal_angle_distance(b1: &DenseMatrix, b2: &DenseMatrix) -> Result<f64> {
    if b1.nrows() != b2.nrows() || b1.ncols() != b2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "bases {}x{} and {}x{}",
            b1.nrows(),
            b1.ncols(),
            b2.nrows(),
            b2.ncols()
        )));
    }
    check_orthonormal(b1)?;
    check_orthonormal(b2)?;
    let diff = b1 * b1.transpose() - b2 * b2.transpose();
    Ok(sym_spectral_norm(&diff).clamp(0.0, 1.0))
}

/// Smallest eigenvalue of a PSD matrix exceeding `rank_tol · λ_max`.
pub fn min_nonzero_eigenvalue(s: &DenseMatrix, rank_tol: f64) -> Result<f64> {
    ensure_square(s)?;
    let ev = sym_eigenvalues_desc(s);
    let max = ev.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Err(Error::NoNonzeroEigenvalue);
    }
    ev.iter()
        .rev()
        .copied()
        .find(|&l| l > rank_tol * max)
        .ok_or(Error::NoNonzeroEigenvalue)
}

/// Columns of `a` listed in `idx`, in that order.
pub fn select_columns(a: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])])
}

/// Haar-distributed `rows × cols` matrix with orthonormal columns: QR of a
/// Gaussian matrix with the signs of `R`'s diagonal folded into `Q`.
pub fn haar_orthonormal<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    use rand_distr::StandardNormal;
    assert!(cols <= rows, "need cols <= rows for orthonormal columns");
    let g = DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_columns(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseMatrix::from_fn(rows, cols, |_, _| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal));
        for mut c in a.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        a
    }

    #[test]
    fn stable_rank_identical_columns() {
        let col = DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let a = DenseMatrix::from_fn(3, 5, |r, _| col[r]);
        assert!((stable_rank(&a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_rank_identity() {
        for k in 1..7 {
            let a = DenseMatrix::identity(k, k);
            assert!((stable_rank(&a).unwrap() - k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn stable_rank_matches_svd() {
        let a = unit_columns(4, 50, 7);
        let sv = a.clone().svd(false, false).singular_values;
        let top = sv.iter().fold(0.0_f64, |m, &x| m.max(x));
        let oracle = sv.iter().map(|x| x * x).sum::<f64>() / (top * top);
        assert!((stable_rank(&a).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn stable_rank_zero_matrix_is_domain_error() {
        assert!(matches!(stable_rank(&DenseMatrix::zeros(3, 4)), Err(Error::Domain(_))));
    }

    #[test]
    fn column_norm_cases() {
        assert_eq!(column_norm(&DenseMatrix::identity(5, 5)), 5.0);
        assert_eq!(column_norm(&DenseMatrix::zeros(4, 4)), 0.0);
        let h = unit_columns(5, 5, 3) * 2.5 - DenseMatrix::identity(5, 5);
        let mut oracle = 0.0;
        for j in 0..5 {
            let mut s = 0.0;
            for i in 0..5 {
                s += h[(i, j)] * h[(i, j)];
            }
            oracle += f64::sqrt(s);
        }
        assert!((column_norm(&h) - oracle).abs() < 1e-12);
    }

    #[test]
    fn condition_number_cases() {
        assert!((gram_condition_number(&DenseMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        let dup = DenseMatrix::from_row_slice(2, 2, &[0.6, 0.6, 0.8, 0.8]);
        assert!(gram_condition_number(&dup).unwrap().is_infinite());
        assert!(matches!(
            gram_condition_number(&DenseMatrix::zeros(3, 0)),
            Err(Error::EmptySelection)
        ));

        let a = unit_columns(4, 9, 11);
        let ev = (a.clone() * a.transpose()).symmetric_eigenvalues();
        let (mx, mn) = ev.iter().fold((f64::MIN, f64::MAX), |(x, y), &l| (x.max(l), y.min(l)));
        let kappa = gram_condition_number(&a).unwrap();
        assert!((kappa - mx / mn).abs() <= 1e-8 * (mx / mn));
    }

    #[test]
    fn principal_angle_distance_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = haar_orthonormal(7, 3, &mut rng);
        assert!(principal_angle_distance(&b, &b).unwrap() < 1e-12);

        let e1 = DenseMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DenseMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((principal_angle_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);

        let rot = haar_orthonormal(3, 3, &mut rng);
        assert!(principal_angle_distance(&b, &(&b * rot)).unwrap() < 1e-10);

        let bad = DenseMatrix::from_column_slice(2, 1, &[1.0, 0.1]);
        assert!(matches!(
            principal_angle_distance(&bad, &e1),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn principal_angle_distance_matches_angle_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let b1 = haar_orthonormal(8, 3, &mut rng);
            let b2 = haar_orthonormal(8, 3, &mut rng);
            // sin of the largest principal angle from the smallest cosine.
            let sv = (b1.transpose() * &b2).svd(false, false).singular_values;
            let cos_min = sv.iter().fold(f64::MAX, |m, &x| m.min(x)).min(1.0);
            let oracle = (1.0 - cos_min * cos_min).max(0.0).sqrt();
            assert!((principal_angle_distance(&b1, &b2).unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn min_nonzero_eigenvalue_cases() {
        assert!((min_nonzero_eigenvalue(&DenseMatrix::identity(4, 4), 1e-10).unwrap() - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.0]));
        assert!((min_nonzero_eigenvalue(&d, 1e-10).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            min_nonzero_eigenvalue(&DenseMatrix::zeros(3, 3), 1e-10),
            Err(Error::NoNonzeroEigenvalue)
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = haar_orthonormal(10, 4, &mut rng);
        let g = unit_columns(4, 4, 22);
        let d = &g * g.transpose() + DenseMatrix::identity(4, 4) * 0.05;
        let embedded = &b * &d * b.transpose();
        let oracle = sym_eigenvalues_desc(&d)[3];
        assert!((min_nonzero_eigenvalue(&embedded, 1e-10).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn haar_is_orthonormal_and_full_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = haar_orthonormal(30, 6, &mut rng);
        assert!(orthonormality_error(&b) < 1e-10);
        let q = haar_orthonormal(5, 5, &mut rng);
        assert!((&q * q.transpose() - DenseMatrix::identity(5, 5)).amax() < 1e-10);
    }
}
