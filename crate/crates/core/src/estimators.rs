//! Spectral subspace estimators and the split moment proxies used by
//! empirical screening.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, DenseMatrix};
use crate::simgen::SourceDataset;

/// Per-source cross moments from the two sample halves: rows `0..⌊n/2⌋`
/// give `z̄`, the remaining rows give `z̃`. Each half is averaged over its own
/// length so both are unbiased for `Γθ`.
pub fn local_moment_split(ds: &SourceDataset) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "source {} has {n} samples, need 2",
            ds.source_id
        )));
    }
    let half = n / 2;
    let x = &ds.covariates;
    let y = &ds.responses;
    let first = x.rows(0, half).tr_mul(&y.rows(0, half)) / half as f64;
    let second = x.rows(half, n - half).tr_mul(&y.rows(half, n - half)) / (n - half) as f64;
    Ok((first, second))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentProxies {
    /// Columns `z̄_i`, d×M.
    pub zbar: DenseMatrix,
    /// Columns `z̃_i`, d×M.
    pub ztilde: DenseMatrix,
    /// `Â = Z̄ + Z̃`.
    pub a_hat: DenseMatrix,
    /// `Ẑ = Σ z̄_i z̃_iᵀ`.
    pub z_hat: DenseMatrix,
    /// `Z = (1/N) Σ n_i z̄_i z̃_iᵀ`.
    pub z_weighted: DenseMatrix,
    pub sample_sizes: Vec<usize>,
}

impl MomentProxies {
    pub fn num_sources(&self) -> usize {
        self.zbar.ncols()
    }

    pub fn dim(&self) -> usize {
        self.zbar.nrows()
    }
}

pub fn build_moment_proxies<S: Borrow<SourceDataset> + Sync>(sources: &[S]) -> Result<MomentProxies> {
    let first = sources
        .first()
        .ok_or_else(|| Error::Domain("no sources to build moment proxies from".into()))?;
    let d = first.borrow().dim();
    if sources.iter().any(|s| s.borrow().dim() != d) {
        return Err(Error::DimensionMismatch(
            "sources disagree on covariate dimension".into(),
        ));
    }
    let halves = sources
        .par_iter()
        .map(|s| local_moment_split(s.borrow()))
        .collect::<Result<Vec<_>>>()?;
    let m = sources.len();
    let mut zbar = DenseMatrix::zeros(d, m);
    let mut ztilde = DenseMatrix::zeros(d, m);
    let mut z_hat = DenseMatrix::zeros(d, d);
    let mut z_weighted = DenseMatrix::zeros(d, d);
    let sample_sizes: Vec<usize> = sources.iter().map(|s| s.borrow().len()).collect();
    // Reductions run in source order so results do not depend on scheduling.
    for (i, (zb, zt)) in halves.iter().enumerate() {
        zbar.set_column(i, zb);
        ztilde.set_column(i, zt);
        let outer = zb * zt.transpose();
        z_weighted += &outer * sample_sizes[i] as f64;
        z_hat += outer;
    }
    let total: usize = sample_sizes.iter().sum();
    z_weighted /= total as f64;
    Ok(MomentProxies {
        a_hat: &zbar + &ztilde,
        zbar,
        ztilde,
        z_hat,
        z_weighted,
        sample_sizes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    SplitAveraging,
    Mom,
    /// Reserved for a debiased estimator that is not shipped.
    Dfht,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::SplitAveraging => "split_averaging",
            EstimatorKind::Mom => "mom",
            EstimatorKind::Dfht => "dfht",
        }
    }

    pub fn estimate<S: Borrow<SourceDataset> + Sync>(self, sources: &[S], k: usize) -> Result<SubspaceEstimate> {
        match self {
            EstimatorKind::SplitAveraging => split_averaging_estimate(sources, k),
            EstimatorKind::Mom => mom_estimate(sources, k),
            EstimatorKind::Dfht => Err(Error::EstimatorUnavailable("dfht")),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split_averaging" => Ok(EstimatorKind::SplitAveraging),
            "mom" => Ok(EstimatorKind::Mom),
            "dfht" => Ok(EstimatorKind::Dfht),
            other => Err(Error::config(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    /// d×k orthonormal basis.
    pub basis: DenseMatrix,
    /// Magnitudes of the k leading eigenvalues, nonincreasing.
    pub spectrum: Vec<f64>,
    pub estimator_name: &'static str,
    /// The k-th and (k+1)-th eigenvalue magnitudes coincide, so the span was
    /// fixed by index order rather than by the data.
    pub degenerate_gap: bool,
}

/// Top-k eigenvectors of the symmetrised `Z = (1/N) Σ n_i z̄_i z̃_iᵀ`.
pub fn split_averaging_estimate<S: Borrow<SourceDataset> + Sync>(sources: &[S], k: usize) -> Result<SubspaceEstimate> {
    let proxies = build_moment_proxies(sources)?;
    split_averaging_from_proxies(&proxies, k)
}

pub fn split_averaging_from_proxies(proxies: &MomentProxies, k: usize) -> Result<SubspaceEstimate> {
    let z = &proxies.z_weighted;
    let sym = (z + z.transpose()) * 0.5;
    top_k_by_magnitude(&sym, k, "split_averaging")
}

/// Top-k eigenvectors of `(1/N) Σ_ij y_ij² x_ij x_ijᵀ`.
pub fn mom_estimate<S: Borrow<SourceDataset> + Sync>(sources: &[S], k: usize) -> Result<SubspaceEstimate> {
    let first = sources
        .first()
        .ok_or_else(|| Error::Domain("no sources to estimate from".into()))?;
    let d = first.borrow().dim();
    let partial: Vec<DenseMatrix> = sources
        .par_iter()
        .map(|s| {
            let ds = s.borrow();
            let weighted = DenseMatrix::from_fn(ds.len(), d, |r, c| ds.covariates[(r, c)] * ds.responses[r]);
            weighted.tr_mul(&weighted)
        })
        .collect();
    let mut acc = DenseMatrix::zeros(d, d);
    for p in &partial {
        if p.nrows() != d {
            return Err(Error::DimensionMismatch(
                "sources disagree on covariate dimension".into(),
            ));
        }
        acc += p;
    }
    let total: usize = sources.iter().map(|s| s.borrow().len()).sum();
    acc /= total as f64;
    top_k_by_magnitude(&acc, k, "mom")
}

/// Eigenvectors of a symmetric matrix for the k largest `|λ|`; ties keep the
/// order of the nonincreasing eigenvalue list.
pub fn top_k_by_magnitude(sym: &DenseMatrix, k: usize, name: &'static str) -> Result<SubspaceEstimate> {
    let d = sym.nrows();
    if k == 0 || k > d {
        return Err(Error::Domain(format!("cannot extract {k} directions in dimension {d}")));
    }
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("moment matrix has non-finite entries".into()));
    }
    let (values, vectors) = sym_eigen_desc(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let mut basis = DenseMatrix::zeros(d, k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        basis.set_column(dst, &vectors.column(src));
    }
    let spectrum: Vec<f64> = order.iter().take(k).map(|&i| values[i].abs()).collect();
    let scale = values[order[0]].abs();
    let degenerate_gap = if scale == 0.0 {
        true
    } else if k < d {
        (values[order[k - 1]].abs() - values[order[k]].abs()) <= 1e-12 * scale
    } else {
        false
    };
    if degenerate_gap {
        log::warn!("{name}: eigengap at position {k} is degenerate; using index order");
    }
    Ok(SubspaceEstimate {
        basis,
        spectrum,
        estimator_name: name,
        degenerate_gap,
    })
}

/// Mean squared residual of each source after refitting its head by least
/// squares on `X_i B`.
pub fn local_refit_losses<S: Borrow<SourceDataset> + Sync>(sources: &[S], basis: &DenseMatrix) -> Result<Vec<f64>> {
    sources
        .par_iter()
        .map(|s| {
            let ds = s.borrow();
            if ds.dim() != basis.nrows() {
                return Err(Error::DimensionMismatch("basis and covariates disagree".into()));
            }
            let design = &ds.covariates * basis;
            let svd = design.clone().svd(true, true);
            let head = svd
                .solve(&ds.responses, 1e-12)
                .map_err(|e| Error::Domain(e.to_string()))?;
            let resid = &ds.responses - design * head;
            Ok(resid.norm_squared() / ds.len() as f64)
        })
        .collect()
}
