//! Synthetic multi-source linear regression populations.
//!
//! Source `i` observes `y = xᵀθ_i + ξ` with `x ~ N(0, Γ_i)`, `ξ ~ N(0, σ²)`
//! and `Γ_i θ_i = B α_i` for a shared orthonormal `B` (d×k) and a
//! source-specific head `α_i`. Heads follow one of three regimes.
//!
//! Randomness is split into independent ChaCha streams keyed by
//! `(seed, stream id)` so that sources can be generated in parallel and a
//! given `(config, seed)` always yields the same bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{haar_orthonormal, DenseMatrix};

/// Stream identifiers for [`stream_rng`].
pub mod streams {
    pub const GROUND_TRUTH: u64 = 0;
    pub const SAMPLE_SIZES: u64 = 1;
    /// Selector streams are `SELECTOR_BASE + selector index`.
    pub const SELECTOR_BASE: u64 = 1 << 16;
    pub const SOURCE_BASE: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `k` mutually orthogonal unit heads; `multiplicities[j]` sources carry head `j`.
    Orthogonal { multiplicities: Vec<usize> },
    /// Two groups occupying disjoint halves of the latent space; `g = P(group 1)`.
    Clustered { g: f64 },
    /// `α_i ~ N(0, Ψ_i)` with a random trace-normalised `Ψ_i` per source.
    HeteroGaussian,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Orthogonal { .. } => "orthogonal",
            Regime::Clustered { .. } => "clustered",
            Regime::HeteroGaussian => "hetero_gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    /// Inclusive range for per-source sample sizes; `None` means `[⌈d/3⌉, d]`.
    pub n_range: Option<[usize; 2]>,
    pub regime: Regime,
    pub noise_std: f64,
    /// Draw sample sizes from the seed's stream (true) or keep them fixed
    /// across seeds (false).
    pub resample_sizes: bool,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            m: 100,
            d: 30,
            k: 6,
            n_range: None,
            regime: Regime::Clustered { g: 0.2 },
            noise_std: 1.0,
            resample_sizes: true,
            seed: 0,
        }
    }
}

impl PopulationConfig {
    pub fn sample_size_range(&self) -> [usize; 2] {
        self.n_range.unwrap_or([self.d.div_ceil(3).max(2), self.d.max(2)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 || self.k == 0 {
            return Err(Error::config("m, d and k must be positive"));
        }
        if self.k > self.d {
            return Err(Error::config(format!("k = {} exceeds d = {}", self.k, self.d)));
        }
        let [lo, hi] = self.sample_size_range();
        if lo < 2 || lo > hi {
            return Err(Error::config(format!("invalid sample size range [{lo}, {hi}]")));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise_std must be finite and nonnegative"));
        }
        match &self.regime {
            Regime::Orthogonal { multiplicities } => {
                check_multiplicities(self.k, self.m, multiplicities)?;
            }
            Regime::Clustered { g } => {
                if !self.k.is_multiple_of(2) {
                    return Err(Error::config("clustered regime needs even k"));
                }
                if !(0.0..=1.0).contains(g) {
                    return Err(Error::config("cluster probability must be in [0, 1]"));
                }
            }
            Regime::HeteroGaussian => {}
        }
        Ok(())
    }
}

fn check_multiplicities(k: usize, m: usize, mult: &[usize]) -> Result<()> {
    if mult.len() != k {
        return Err(Error::config(format!("{} multiplicities for k = {k}", mult.len())));
    }
    if mult.contains(&0) {
        return Err(Error::config("multiplicities must be positive"));
    }
    if mult.iter().sum::<usize>() != m {
        return Err(Error::config(format!(
            "multiplicities sum to {}, expected M = {m}",
            mult.iter().sum::<usize>()
        )));
    }
    if mult.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::config("multiplicities must be nonincreasing"));
    }
    Ok(())
}

/// Covariate covariance of one source.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Isotropic { variance: f64 },
    Full { matrix: DenseMatrix, cholesky: DenseMatrix },
}

impl Covariance {
    pub fn full(matrix: DenseMatrix) -> Result<Self> {
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        Ok(Covariance::Full {
            cholesky: chol.l(),
            matrix,
        })
    }

    pub fn matrix(&self, d: usize) -> DenseMatrix {
        match self {
            Covariance::Isotropic { variance } => DenseMatrix::identity(d, d) * *variance,
            Covariance::Full { matrix, .. } => matrix.clone(),
        }
    }

    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Covariance::Isotropic { variance } => v / *variance,
            Covariance::Full { cholesky, .. } => {
                let y = cholesky.solve_lower_triangular(v).expect("nonsingular factor");
                cholesky
                    .transpose()
                    .solve_upper_triangular(&y)
                    .expect("nonsingular factor")
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        match self {
            Covariance::Isotropic { variance } => z * variance.sqrt(),
            Covariance::Full { cholesky, .. } => cholesky * z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `B`, d×k with orthonormal columns.
    pub shared_basis: DenseMatrix,
    /// `A = [α_1 … α_M]`, k×M.
    pub heads: DenseMatrix,
    pub covariances: Vec<Covariance>,
    pub noise_std: f64,
    /// Group id per source (cluster, or head index in the orthogonal regime).
    pub cluster_labels: Option<Vec<usize>>,
    /// `θ_i = Γ_i⁻¹ B α_i` as columns, d×M.
    pub theta: DenseMatrix,
}

impl GroundTruth {
    pub fn new(
        shared_basis: DenseMatrix,
        heads: DenseMatrix,
        covariances: Vec<Covariance>,
        noise_std: f64,
        cluster_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        crate::linalg::check_orthonormal(&shared_basis)?;
        if heads.nrows() != shared_basis.ncols() || covariances.len() != heads.ncols() {
            return Err(Error::DimensionMismatch("basis, heads and covariances disagree".into()));
        }
        let d = shared_basis.nrows();
        let mut theta = DenseMatrix::zeros(d, heads.ncols());
        for (i, cov) in covariances.iter().enumerate() {
            let target = &shared_basis * heads.column(i);
            theta.set_column(i, &cov.solve(&target));
        }
        Ok(Self {
            shared_basis,
            heads,
            covariances,
            noise_std,
            cluster_labels,
            theta,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.heads.ncols()
    }

    pub fn dim(&self) -> usize {
        self.shared_basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.shared_basis.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset {
    pub source_id: usize,
    /// n×d, one sample per row.
    pub covariates: DenseMatrix,
    pub responses: DVector<f64>,
}

impl SourceDataset {
    pub fn new(source_id: usize, covariates: DenseMatrix, responses: DVector<f64>) -> Result<Self> {
        if covariates.nrows() != responses.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate rows, {} responses",
                covariates.nrows(),
                responses.len()
            )));
        }
        if responses.len() < 2 {
            return Err(Error::Domain("a source needs at least two samples".into()));
        }
        Ok(Self {
            source_id,
            covariates,
            responses,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariates.ncols()
    }
}

pub fn sample_ground_truth<R: Rng + ?Sized>(config: &PopulationConfig, rng: &mut R) -> Result<GroundTruth> {
    config.validate()?;
    let PopulationConfig { m, d, k, .. } = *config;
    let basis = haar_orthonormal(d, k, rng);
    let (heads, labels) = match &config.regime {
        Regime::Orthogonal { multiplicities } => {
            let (h, l) = sample_heads_orthogonal(k, multiplicities, rng)?;
            (h, Some(l))
        }
        Regime::Clustered { g } => {
            let (h, l) = sample_heads_clustered(m, k, *g, rng)?;
            (h, Some(l))
        }
        Regime::HeteroGaussian => (sample_heads_hetero_gaussian(m, k, rng)?, None),
    };
    let covariances = vec![
        Covariance::Isotropic {
            variance: 1.0 / d as f64
        };
        m
    ];
    GroundTruth::new(basis, heads, covariances, config.noise_std, labels)
}

/// Group 0 heads live on the first `k/2` latent coordinates, group 1 heads on
/// the rest. `g` is the probability of group 0.
pub fn sample_heads_clustered<R: Rng + ?Sized>(
    m: usize,
    k: usize,
    g: f64,
    rng: &mut R,
) -> Result<(DenseMatrix, Vec<usize>)> {
    if !k.is_multiple_of(2) {
        return Err(Error::config("clustered heads need even k"));
    }
    let half = k / 2;
    let mut heads = DenseMatrix::zeros(k, m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let group = if rng.random::<f64>() < g { 0 } else { 1 };
        let offset = group * half;
        for r in 0..half {
            heads[(offset + r, i)] = rng.sample(StandardNormal);
        }
        labels.push(group);
    }
    Ok((heads, labels))
}

/// `Ψ = (U + Uᵀ)/2 + 3I` with `U` uniform on `[0, 1)`, rescaled to trace `k`.
pub fn hetero_covariance<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DenseMatrix {
    let u = DenseMatrix::from_fn(k, k, |_, _| rng.random::<f64>());
    let mut psi = (&u + u.transpose()) * 0.5 + DenseMatrix::identity(k, k) * 3.0;
    let tr = psi.trace();
    psi *= k as f64 / tr;
    psi
}

pub fn sample_heads_hetero_gaussian<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Result<DenseMatrix> {
    let mut heads = DenseMatrix::zeros(k, m);
    for i in 0..m {
        let psi = hetero_covariance(k, rng);
        let l = psi
            .cholesky()
            .ok_or_else(|| Error::Domain("head covariance not positive definite".into()))?
            .l();
        let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        heads.set_column(i, &(l * z));
    }
    Ok(heads)
}

/// Haar-random orthonormal frame in `R^k`; the first `multiplicities[0]`
/// sources get head 0, the next `multiplicities[1]` head 1, and so on.
pub fn sample_heads_orthogonal<R: Rng + ?Sized>(
    k: usize,
    multiplicities: &[usize],
    rng: &mut R,
) -> Result<(DenseMatrix, Vec<usize>)> {
    let m: usize = multiplicities.iter().sum();
    check_multiplicities(k, m, multiplicities)?;
    let frame = haar_orthonormal(k, k, rng);
    let mut heads = DenseMatrix::zeros(k, m);
    let mut labels = Vec::with_capacity(m);
    for (j, &count) in multiplicities.iter().enumerate() {
        for _ in 0..count {
            heads.set_column(labels.len(), &frame.column(j));
            labels.push(j);
        }
    }
    Ok((heads, labels))
}

pub fn generate_source_data<R: Rng + ?Sized>(
    truth: &GroundTruth,
    source_id: usize,
    n: usize,
    rng: &mut R,
) -> Result<SourceDataset> {
    if n < 2 {
        return Err(Error::Domain("a source needs at least two samples".into()));
    }
    let d = truth.dim();
    let cov = &truth.covariances[source_id];
    let theta = truth.theta.column(source_id);
    let mut x = DenseMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for j in 0..n {
        let row = cov.sample(d, rng);
        let noise: f64 = rng.sample(StandardNormal);
        y[j] = row.dot(&theta) + truth.noise_std * noise;
        x.set_row(j, &row.transpose());
    }
    SourceDataset::new(source_id, x, y)
}

/// `(1/N) Σ n_i α_i α_iᵀ` with `N = Σ n_i`.
pub fn diversity_matrix(heads: &DenseMatrix, sample_sizes: &[usize]) -> Result<DenseMatrix> {
    if heads.ncols() != sample_sizes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} heads, {} sample sizes",
            heads.ncols(),
            sample_sizes.len()
        )));
    }
    let total: usize = sample_sizes.iter().sum();
    if total == 0 {
        return Err(Error::Domain("total sample size is zero".into()));
    }
    let k = heads.nrows();
    let mut d = DenseMatrix::zeros(k, k);
    for (i, &n) in sample_sizes.iter().enumerate() {
        let a = heads.column(i);
        d += (a * a.transpose()) * n as f64;
    }
    Ok(d / total as f64)
}

/// A generated population: ground truth plus one dataset per source.
#[derive(Debug, Clone)]
pub struct Population {
    pub config: PopulationConfig,
    pub truth: GroundTruth,
    pub sample_sizes: Vec<usize>,
    pub sources: Vec<SourceDataset>,
}

impl Population {
    pub fn generate(config: &PopulationConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let truth = sample_ground_truth(config, &mut stream_rng(seed, streams::GROUND_TRUTH))?;
        let [lo, hi] = config.sample_size_range();
        let size_seed = if config.resample_sizes { seed } else { 0 };
        let mut size_rng = stream_rng(size_seed, streams::SAMPLE_SIZES);
        let sample_sizes: Vec<usize> = (0..config.m).map(|_| size_rng.random_range(lo..=hi)).collect();
        let sources = sample_sizes
            .par_iter()
            .enumerate()
            .map(|(i, &n)| {
                let mut rng = stream_rng(seed, streams::SOURCE_BASE + i as u64);
                generate_source_data(&truth, i, n, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            truth,
            sample_sizes,
            sources,
        })
    }

    pub fn total_samples(&self) -> usize {
        self.sample_sizes.iter().sum()
    }

    /// Writes `source_id,row_id,x_1..x_d,y` rows to `csv_path` and a JSON
    /// sidecar with the config, sample sizes, `B` and the heads.
    pub fn dump(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        let d = self.truth.dim();
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
        let mut header = vec!["source_id".to_string(), "row_id".to_string()];
        header.extend((1..=d).map(|j| format!("x_{j}")));
        header.push("y".into());
        w.write_record(&header)?;
        for src in &self.sources {
            for r in 0..src.len() {
                let mut rec = vec![src.source_id.to_string(), r.to_string()];
                rec.extend(src.covariates.row(r).iter().map(|v| v.to_string()));
                rec.push(src.responses[r].to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;

        let sidecar = PopulationSidecar {
            config: self.config.clone(),
            sample_sizes: self.sample_sizes.clone(),
            shared_basis: rows_of(&self.truth.shared_basis),
            heads: rows_of(&self.truth.heads),
            cluster_labels: self.truth.cluster_labels.clone(),
        };
        let mut f = BufWriter::new(File::create(sidecar_path)?);
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// JSON companion of a population dump, enough to score estimates later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSidecar {
    pub config: PopulationConfig,
    pub sample_sizes: Vec<usize>,
    /// Row-major `B`.
    pub shared_basis: Vec<Vec<f64>>,
    /// Row-major heads matrix (k×M).
    pub heads: Vec<Vec<f64>>,
    pub cluster_labels: Option<Vec<usize>>,
}

fn rows_of(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
