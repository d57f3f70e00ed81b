//! Source screening: the genie-aided and empirical subpopulation searches,
//! the admissibility check and the baseline selectors.
//!
//! Both searches draw random batches of `s` surviving columns, accept a batch
//! when `‖AᵀA − I‖∞→1 ≤ s/8`, and prune it through a symmetric Grothendieck
//! factorization `H = DTD` to the columns with `d_j² ≤ 2/s`. The kept columns
//! then have `‖A_{S_t}ᵀA_{S_t} − I‖ ≤ 2·(2/s)·(s/8) = 1/2`.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::MomentProxies;
use crate::linalg::{
    condition_number_sym, grothendieck_factorize, inf_to_one_norm_auto, select_columns, spectral_norm, stable_rank,
    sym_eigenvalues_desc, sym_spectral_norm, DenseMatrix, FactorizeOptions, DEFAULT_EXACT_THRESHOLD,
};

/// Smallest `c` with `320(c + √(2c)) ≤ 1/2`.
///
/// With `u = √(2c)` the boundary is `160u² + 320u − 1/2 = 0`.
pub fn theoretical_batch_constant() -> f64 {
    let u = (-320.0 + (320.0_f64 * 320.0 + 4.0 * 160.0 * 0.5).sqrt()) / (2.0 * 160.0);
    0.5 * u * u
}

/// Batch-size constant `c` in `s = ⌈c · st.rank⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchConstant {
    Theoretical,
    Practical(f64),
}

impl BatchConstant {
    pub fn value(self) -> f64 {
        match self {
            BatchConstant::Theoretical => theoretical_batch_constant(),
            BatchConstant::Practical(c) => c,
        }
    }

    pub fn label(self) -> String {
        match self {
            BatchConstant::Theoretical => "theoretical".into(),
            BatchConstant::Practical(c) => format!("practical:{c}"),
        }
    }
}

/// How the empirical search estimates `λ_min(AAᵀ)` from `ÂÂᵀ`, which is
/// d×d and of full rank once noise is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProxyEigenvalue {
    /// Smallest eigenvalue above `rank_tol · λ_max`.
    MinNonzero { rank_tol: f64 },
    /// The k-th largest eigenvalue.
    KthLargest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningConfig {
    pub c: BatchConstant,
    pub delta: f64,
    pub exact_norm_threshold: usize,
    pub normalize_columns: bool,
    pub kappa_max: f64,
    pub size_ratio_min: f64,
    /// Lower clamp on the batch size; `None` means `k`.
    pub min_batch: Option<usize>,
    pub proxy_eigenvalue: ProxyEigenvalue,
    pub factorize_tol: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            c: BatchConstant::Practical(0.25),
            delta: 0.1,
            exact_norm_threshold: DEFAULT_EXACT_THRESHOLD,
            normalize_columns: true,
            kappa_max: 3.0,
            size_ratio_min: 0.5,
            min_batch: Some(1),
            proxy_eigenvalue: ProxyEigenvalue::KthLargest,
            factorize_tol: 1e-6,
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        let c = self.c.value();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config(format!("batch constant c = {c} must be positive")));
        }
        if !(self.kappa_max >= 1.0) {
            return Err(Error::config("kappa_max must be at least 1"));
        }
        if !(self.size_ratio_min >= 0.0) {
            return Err(Error::config("size_ratio_min must be nonnegative"));
        }
        if self.min_batch == Some(0) {
            return Err(Error::config("min_batch must be positive"));
        }
        if let ProxyEigenvalue::MinNonzero { rank_tol } = self.proxy_eigenvalue {
            if !(rank_tol > 0.0 && rank_tol < 1.0) {
                return Err(Error::config("rank_tol must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Columns subject to screening with cached summary quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMatrix {
    matrix: DenseMatrix,
    /// Original column norms when the matrix was normalised, else all ones.
    column_scales: Vec<f64>,
    stable_rank: f64,
    spectral_norm_sq: f64,
}

impl HeadMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        let m = matrix.ncols();
        Self::with_scales(matrix, vec![1.0; m])
    }

    /// Rescales every column to unit length and keeps the original norms.
    pub fn normalized(mut matrix: DenseMatrix) -> Result<Self> {
        let mut scales = Vec::with_capacity(matrix.ncols());
        for (j, mut col) in matrix.column_iter_mut().enumerate() {
            let n = col.norm();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::Domain(format!("column {j} cannot be normalised (norm {n})")));
            }
            col /= n;
            scales.push(n);
        }
        Self::with_scales(matrix, scales)
    }

    fn with_scales(matrix: DenseMatrix, column_scales: Vec<f64>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::EmptySelection);
        }
        crate::linalg::ensure_finite(&matrix, "head matrix")?;
        let spectral_norm_sq = spectral_norm(&matrix).powi(2);
        let stable_rank = stable_rank(&matrix)?;
        Ok(Self {
            matrix,
            column_scales,
            stable_rank,
            spectral_norm_sq,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn column_scales(&self) -> &[f64] {
        &self.column_scales
    }

    pub fn stable_rank(&self) -> f64 {
        self.stable_rank
    }

    pub fn spectral_norm_sq(&self) -> f64 {
        self.spectral_norm_sq
    }

    pub fn num_columns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn max_unit_deviation(&self) -> f64 {
        self.matrix
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn gram(&self) -> DenseMatrix {
        &self.matrix * self.matrix.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// The surviving columns fell below the stable-rank floor `k/(2c̃)`.
    StableRankFloor,
    /// All `⌈λ_min⌉` rounds ran.
    RoundCap,
    /// `c · st.rank(A) < 1`; nothing was searched.
    LowStableRank,
    /// Every attempt of some round failed the ∞→1 test.
    InnerLoopExhausted,
}

impl TerminationReason {
    pub fn label(self) -> &'static str {
        match self {
            TerminationReason::StableRankFloor => "stable_rank_floor",
            TerminationReason::RoundCap => "round_cap",
            TerminationReason::LowStableRank => "low_stable_rank",
            TerminationReason::InnerLoopExhausted => "inner_loop_exhausted",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Measurements behind one accepted batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCertificate {
    pub round: usize,
    /// The drawn candidate set `S̃_t`.
    pub drawn: Vec<usize>,
    /// `‖H‖∞→1` of the drawn set (lower end of the bracket when not exact).
    pub inf_to_one: f64,
    pub inf_to_one_exact: bool,
    /// `‖T_t‖` from the factorization.
    pub core_norm: f64,
    /// Directly recomputed `‖A_{S_t}ᵀ A_{S_t} − I‖` on the kept columns.
    pub gram_deviation: f64,
}

/// Run-level quantities the search derived from its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub c: f64,
    pub stable_rank: f64,
    pub batch_size: usize,
    pub c_tilde: f64,
    pub stable_rank_floor: f64,
    pub lambda_min: f64,
    pub round_cap: usize,
    pub attempt_cap: usize,
    pub terminal_stable_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: String,
    pub seed: u64,
    pub selected: Vec<usize>,
    pub batches: Vec<Vec<usize>>,
    pub attempts_per_round: Vec<usize>,
    pub certificates: Vec<BatchCertificate>,
    pub reason: TerminationReason,
    pub t_star: usize,
    pub diagnostics: Option<SearchDiagnostics>,
}

impl SelectionResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Screening search on the true heads (k×M).
pub fn genie_search<R: Rng + ?Sized>(
    heads: &HeadMatrix,
    cfg: &ScreeningConfig,
    seed: u64,
    rng: &mut R,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let k = heads.matrix().nrows();
    let m = heads.num_columns();
    let heads = if heads.max_unit_deviation() > 1e-8 {
        if !cfg.normalize_columns {
            return Err(Error::Domain(format!(
                "head columns deviate from unit norm by {:.3e}",
                heads.max_unit_deviation()
            )));
        }
        HeadMatrix::normalized(heads.matrix().clone())?
    } else {
        heads.clone()
    };
    let c_tilde = heads.spectral_norm_sq() / (m as f64 / k as f64);
    if c_tilde > 10.0 {
        log::warn!("genie search: ‖A‖² is {c_tilde:.2} times M/k");
    }
    let lambda_min = sym_eigenvalues_desc(&heads.gram())[k - 1].max(0.0);
    search(&heads, k, lambda_min, cfg, "genie", seed, rng)
}

/// The same search run on the split moment proxies `Â = Z̄ + Z̃`.
pub fn empirical_search<R: Rng + ?Sized>(
    proxies: &MomentProxies,
    k: usize,
    cfg: &ScreeningConfig,
    seed: u64,
    rng: &mut R,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let m = proxies.num_sources();
    if m < k {
        return Err(Error::InsufficientSources { m, k });
    }
    // Raw proxies carry noise of norm about √(d/n) per column, so at small n
    // this ratio is routinely large; it is reported at info level only.
    let scale = m as f64 / k as f64;
    for (name, z) in [("Z̄", &proxies.zbar), ("Z̃", &proxies.ztilde)] {
        let ratio = spectral_norm(z).powi(2) / scale;
        if ratio > 10.0 {
            log::info!("empirical search: ‖{name}‖² is {ratio:.2} times M/k");
        }
    }
    let a_hat = if cfg.normalize_columns {
        HeadMatrix::normalized(proxies.a_hat.clone())?
    } else {
        HeadMatrix::new(proxies.a_hat.clone())?
    };
    let gram = a_hat.gram();
    let lambda_min = match cfg.proxy_eigenvalue {
        ProxyEigenvalue::MinNonzero { rank_tol } => crate::linalg::min_nonzero_eigenvalue(&gram, rank_tol)?,
        ProxyEigenvalue::KthLargest => sym_eigenvalues_desc(&gram)[(k - 1).min(gram.nrows() - 1)].max(0.0),
    };
    search(&a_hat, k, lambda_min, cfg, "empirical", seed, rng)
}

fn search<R: Rng + ?Sized>(
    a: &HeadMatrix,
    k: usize,
    lambda_min: f64,
    cfg: &ScreeningConfig,
    method: &str,
    seed: u64,
    rng: &mut R,
) -> Result<SelectionResult> {
    let m = a.num_columns();
    let c = cfg.c.value();
    let sr = a.stable_rank();
    let mut result = SelectionResult {
        method: method.to_string(),
        seed,
        selected: Vec::new(),
        batches: Vec::new(),
        attempts_per_round: Vec::new(),
        certificates: Vec::new(),
        reason: TerminationReason::LowStableRank,
        t_star: 0,
        diagnostics: None,
    };
    if c * sr < 1.0 {
        log::info!("{method} search: low stable rank (c·st.rank = {:.3e})", c * sr);
        return Ok(result);
    }
    let s_raw = (c * sr).ceil() as usize;
    let c_tilde = a.spectral_norm_sq() / (m as f64 / k as f64);
    let floor = k as f64 / (2.0 * c_tilde);
    let round_cap = (lambda_min.ceil() as usize).max(1);
    let attempt_cap = attempts_for(lambda_min, cfg.delta);
    let min_batch = cfg.min_batch.unwrap_or(k);
    let opts = FactorizeOptions {
        tol: cfg.factorize_tol,
        exact_threshold: cfg.exact_norm_threshold,
        ..Default::default()
    };

    let mut remaining: Vec<usize> = (0..m).collect();
    let mut reason = TerminationReason::RoundCap;
    let mut t_star = round_cap;
    let mut terminal_rank = sr;
    for t in 1..=round_cap {
        let current = remaining_stable_rank(a, &remaining);
        terminal_rank = current;
        if current < floor {
            reason = TerminationReason::StableRankFloor;
            t_star = t;
            break;
        }
        let s = s_raw.max(min_batch).min(remaining.len());
        let mut accepted = None;
        let mut attempts = 0;
        for _ in 0..attempt_cap {
            attempts += 1;
            let drawn: Vec<usize> = sample(rng, remaining.len(), s)
                .into_iter()
                .map(|p| remaining[p])
                .collect();
            let cols = select_columns(a.matrix(), &drawn);
            let h = cols.tr_mul(&cols) - DenseMatrix::identity(s, s);
            let norm = inf_to_one_norm_auto(&h, cfg.exact_norm_threshold)?;
            if norm.value() > s as f64 / 8.0 {
                continue;
            }
            let fact = grothendieck_factorize(&h, &opts)?;
            let keep: Vec<usize> = drawn
                .iter()
                .zip(fact.diag.iter())
                .filter(|(_, d)| d.powi(2) <= 2.0 / s as f64 + 1e-12)
                .map(|(&j, _)| j)
                .collect();
            accepted = Some((drawn, norm, fact.certified_norm_bound, keep));
            break;
        }
        result.attempts_per_round.push(attempts);
        let Some((drawn, norm, core_norm, mut keep)) = accepted else {
            reason = TerminationReason::InnerLoopExhausted;
            t_star = t;
            break;
        };
        keep.sort_unstable();
        let kept_cols = select_columns(a.matrix(), &keep);
        let deviation = if keep.is_empty() {
            0.0
        } else {
            sym_spectral_norm(&(kept_cols.tr_mul(&kept_cols) - DenseMatrix::identity(keep.len(), keep.len())))
        };
        result.certificates.push(BatchCertificate {
            round: t,
            drawn,
            inf_to_one: norm.value(),
            inf_to_one_exact: norm.exact,
            core_norm,
            gram_deviation: deviation,
        });
        let removed: BTreeSet<usize> = keep.iter().copied().collect();
        remaining.retain(|j| !removed.contains(j));
        result.batches.push(keep);
        if remaining.is_empty() {
            reason = TerminationReason::StableRankFloor;
            t_star = t + 1;
            terminal_rank = 0.0;
            break;
        }
    }

    // Terminal rule: the batch of round t* only counts if the matrix entering
    // that round still met the floor. Batches exist only for rounds that
    // passed the test, so this never drops an emitted batch.
    let batches_in_union = if terminal_rank >= floor {
        result.batches.len().min(t_star)
    } else {
        result.batches.len().min(t_star.saturating_sub(1))
    };
    let union: BTreeSet<usize> = result.batches[..batches_in_union].iter().flatten().copied().collect();
    result.selected = union.into_iter().collect();
    result.reason = reason;
    result.t_star = t_star;
    result.diagnostics = Some(SearchDiagnostics {
        c,
        stable_rank: sr,
        batch_size: s_raw.max(min_batch),
        c_tilde,
        stable_rank_floor: floor,
        lambda_min,
        round_cap,
        attempt_cap,
        terminal_stable_rank: terminal_rank,
    });
    log::debug!(
        "{method} search: {} sources in {} batches, reason {reason}",
        result.selected.len(),
        result.batches.len()
    );
    Ok(result)
}

/// `⌈log_{8/7}(λ_min/δ)⌉`, at least one attempt.
fn attempts_for(lambda_min: f64, delta: f64) -> usize {
    let v = (lambda_min / delta).ln() / (8.0_f64 / 7.0).ln();
    if v.is_finite() && v > 1.0 {
        v.ceil() as usize
    } else {
        1
    }
}

fn remaining_stable_rank(a: &HeadMatrix, remaining: &[usize]) -> f64 {
    if remaining.is_empty() {
        return 0.0;
    }
    stable_rank(&select_columns(a.matrix(), remaining)).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub kappa: f64,
    pub size: usize,
    pub size_floor: f64,
}

/// Checks `κ(Σ_{i∈S} α_i α_iᵀ) ≤ κ_max` and `|S| ≥ ρ · k · λ_min(AAᵀ)`.
/// An empty `S` is reported with an infinite condition number.
pub fn is_admissible(selected: &[usize], heads: &HeadMatrix, k: usize, cfg: &ScreeningConfig) -> AdmissibilityReport {
    let gram = heads.gram();
    let lambda_min = sym_eigenvalues_desc(&gram)[k.min(gram.nrows()) - 1].max(0.0);
    let size_floor = cfg.size_ratio_min * k as f64 * lambda_min;
    let kappa = if selected.is_empty() {
        f64::INFINITY
    } else {
        let cols = select_columns(heads.matrix(), selected);
        condition_number_sym(&(&cols * cols.transpose()))
    };
    AdmissibilityReport {
        admissible: kappa <= cfg.kappa_max && selected.len() as f64 >= size_floor,
        kappa,
        size: selected.len(),
        size_floor,
    }
}

/// `quota` sources drawn without replacement from each label group.
pub fn balanced_baseline<R: Rng + ?Sized>(labels: &[usize], quota: usize, rng: &mut R) -> Result<Vec<usize>> {
    let groups: BTreeSet<usize> = labels.iter().copied().collect();
    let mut out = Vec::with_capacity(quota * groups.len());
    for g in groups {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
        if quota > members.len() {
            return Err(Error::Domain(format!(
                "quota {quota} exceeds group {g} of size {}",
                members.len()
            )));
        }
        out.extend(sample(rng, members.len(), quota).into_iter().map(|p| members[p]));
    }
    out.sort_unstable();
    Ok(out)
}

pub fn random_baseline<R: Rng + ?Sized>(m_total: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m > m_total {
        return Err(Error::Domain(format!("cannot draw {m} of {m_total} sources")));
    }
    let mut out = sample(rng, m_total, m).into_vec();
    out.sort_unstable();
    Ok(out)
}

/// The `m` sources with the largest local loss, ties to the lower index.
pub fn power_of_choice_baseline(local_losses: &[f64], m: usize) -> Result<Vec<usize>> {
    if m > local_losses.len() {
        return Err(Error::Domain(format!(
            "cannot pick {m} of {} sources",
            local_losses.len()
        )));
    }
    let mut order: Vec<usize> = (0..local_losses.len()).collect();
    order.sort_by(|&a, &b| local_losses[b].total_cmp(&local_losses[a]).then(a.cmp(&b)));
    let mut out = order[..m].to_vec();
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gram_condition_number, haar_orthonormal};
    use crate::simgen::{diversity_matrix, sample_heads_orthogonal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sphere_heads(k: usize, m: usize, seed: u64) -> HeadMatrix {
        let mut r = rng(seed);
        let g = DenseMatrix::from_fn(k, m, |_, _| r.sample::<f64, _>(StandardNormal));
        HeadMatrix::normalized(g).unwrap()
    }

    #[test]
    fn theoretical_constant_solves_boundary() {
        let c = theoretical_batch_constant();
        assert!((320.0 * (c + (2.0 * c).sqrt()) - 0.5).abs() < 1e-12);
        assert!((c - 1.2188e-6).abs() < 1e-9, "{c}");
    }

    #[test]
    fn identical_columns_have_low_stable_rank() {
        let col = [0.6, 0.8, 0.0];
        let a = DenseMatrix::from_fn(3, 40, |r, _| col[r]);
        let heads = HeadMatrix::new(a).unwrap();
        let cfg = ScreeningConfig {
            c: BatchConstant::Practical(0.5),
            ..Default::default()
        };
        let res = genie_search(&heads, &cfg, 0, &mut rng(0)).unwrap();
        assert!(res.selected.is_empty());
        assert_eq!(res.reason, TerminationReason::LowStableRank);
    }

    #[test]
    fn theoretical_constant_exits_at_desk_scale() {
        let heads = sphere_heads(8, 400, 1);
        let cfg = ScreeningConfig {
            c: BatchConstant::Theoretical,
            ..Default::default()
        };
        let res = genie_search(&heads, &cfg, 0, &mut rng(0)).unwrap();
        assert_eq!(res.reason, TerminationReason::LowStableRank);
    }

    #[test]
    fn accepted_batches_are_certified() {
        for seed in 0..5 {
            let heads = sphere_heads(6, 300, seed);
            let res = genie_search(&heads, &ScreeningConfig::default(), seed, &mut rng(seed)).unwrap();
            for (cert, batch) in res.certificates.iter().zip(&res.batches) {
                let cols = select_columns(heads.matrix(), batch);
                let dev = sym_spectral_norm(&(cols.tr_mul(&cols) - DenseMatrix::identity(batch.len(), batch.len())));
                assert!(dev <= 0.5 + 1e-6);
                assert!((dev - cert.gram_deviation).abs() < 1e-12);
                assert!(2 * batch.len() >= cert.drawn.len());
            }
        }
    }

    #[test]
    fn orthogonal_repeated_directions_certify() {
        let k = 4;
        let (a, _) = sample_heads_orthogonal(k, &[25; 4], &mut rng(2)).unwrap();
        let heads = HeadMatrix::new(a).unwrap();
        let cfg = ScreeningConfig {
            c: BatchConstant::Practical(0.5),
            ..Default::default()
        };
        let res = genie_search(&heads, &cfg, 0, &mut rng(3)).unwrap();
        assert!(!res.batches.is_empty());
        for batch in &res.batches {
            let cols = select_columns(heads.matrix(), batch);
            let dev = sym_spectral_norm(&(cols.tr_mul(&cols) - DenseMatrix::identity(batch.len(), batch.len())));
            assert!(dev <= 0.5 + 1e-6);
        }
    }

    #[test]
    fn batches_are_disjoint_and_union_is_selected() {
        let heads = sphere_heads(5, 200, 4);
        let res = genie_search(&heads, &ScreeningConfig::default(), 4, &mut rng(4)).unwrap();
        let mut seen = BTreeSet::new();
        for b in &res.batches {
            for &j in b {
                assert!(seen.insert(j), "index {j} selected twice");
            }
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), res.selected);
    }

    #[test]
    fn search_is_deterministic() {
        let heads = sphere_heads(5, 200, 5);
        let cfg = ScreeningConfig::default();
        let a = genie_search(&heads, &cfg, 5, &mut rng(9)).unwrap();
        let b = genie_search(&heads, &cfg, 5, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn rank_clamp_stops_random_heads() {
        // Batches of at least k random unit vectors essentially never pass
        // the s/8 test.
        let heads = sphere_heads(8, 500, 6);
        let cfg = ScreeningConfig {
            c: BatchConstant::Practical(1.0),
            min_batch: None,
            ..Default::default()
        };
        let res = genie_search(&heads, &cfg, 0, &mut rng(6)).unwrap();
        assert_eq!(res.reason, TerminationReason::InnerLoopExhausted);
        assert!(res.selected.is_empty());
    }

    #[test]
    fn unnormalised_heads_are_rejected_without_flag() {
        let a = DenseMatrix::from_row_slice(2, 3, &[2.0, 0.0, 1.0, 0.0, 3.0, 1.0]);
        let heads = HeadMatrix::new(a).unwrap();
        let cfg = ScreeningConfig {
            normalize_columns: false,
            ..Default::default()
        };
        assert!(genie_search(&heads, &cfg, 0, &mut rng(0)).is_err());
        assert!(genie_search(&heads, &ScreeningConfig::default(), 0, &mut rng(0)).is_ok());
    }

    #[test]
    fn json_has_expected_keys() {
        let heads = sphere_heads(4, 100, 7);
        let res = genie_search(&heads, &ScreeningConfig::default(), 7, &mut rng(7)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&res.to_json().unwrap()).unwrap();
        for key in [
            "method",
            "seed",
            "selected",
            "batches",
            "certificates",
            "reason",
            "t_star",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: SelectionResult = serde_json::from_str(&res.to_json().unwrap()).unwrap();
        assert_eq!(back, res);
    }

    #[test]
    fn admissibility_cases() {
        let k = 3;
        let (a, _) = sample_heads_orthogonal(k, &[10, 10, 10], &mut rng(8)).unwrap();
        let heads = HeadMatrix::new(a).unwrap();
        let cfg = ScreeningConfig::default();
        let all: Vec<usize> = (0..30).collect();
        let rep = is_admissible(&all, &heads, k, &cfg);
        assert!(rep.admissible);
        assert!((rep.kappa - 1.0).abs() < 1e-10);
        let one = is_admissible(&[0], &heads, k, &cfg);
        assert!(!one.admissible && one.kappa.is_infinite());
        assert!(!is_admissible(&[], &heads, k, &cfg).admissible);
    }

    #[test]
    fn genie_balanced_example_from_orthogonal_heads() {
        // Take β_k·M sources per head from an unbalanced population.
        let k = 3;
        let mult = [20, 12, 8];
        let (a, labels) = sample_heads_orthogonal(k, &mult, &mut rng(10)).unwrap();
        let heads = HeadMatrix::new(a).unwrap();
        let s = balanced_baseline(&labels, 8, &mut rng(11)).unwrap();
        assert_eq!(s.len(), k * 8);
        let cols = select_columns(heads.matrix(), &s);
        assert!((gram_condition_number(&cols).unwrap() - 1.0).abs() < 1e-10);
        let d = diversity_matrix(&cols, &vec![5; s.len()]).unwrap();
        for e in sym_eigenvalues_desc(&d) {
            assert!((e - 1.0 / k as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn balanced_baseline_cases() {
        let labels = [0, 1, 1, 0, 1, 1, 1];
        let s = balanced_baseline(&labels, 2, &mut rng(0)).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.contains(&0) && s.contains(&3));
        assert!(balanced_baseline(&labels, 3, &mut rng(0)).is_err());
    }

    #[test]
    fn random_baseline_cases() {
        assert_eq!(random_baseline(5, 5, &mut rng(0)).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(random_baseline(5, 0, &mut rng(0)).unwrap().is_empty());
        assert!(random_baseline(5, 6, &mut rng(0)).is_err());
    }

    #[test]
    fn random_baseline_frequencies() {
        let (total, m, draws) = (20usize, 5usize, 10_000usize);
        let mut counts = vec![0usize; total];
        let mut r = rng(1);
        for _ in 0..draws {
            for i in random_baseline(total, m, &mut r).unwrap() {
                counts[i] += 1;
            }
        }
        let p = m as f64 / total as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sd + 1.0);
        }
    }

    #[test]
    fn power_of_choice_cases() {
        assert_eq!(power_of_choice_baseline(&[1.0; 6], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(power_of_choice_baseline(&[3.0, 1.0, 2.0], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(power_of_choice_baseline(&[5.0, 4.0, 3.0, 2.0], 2).unwrap(), vec![0, 1]);
        assert_eq!(power_of_choice_baseline(&[0.1, 4.0, 3.0, 9.0], 2).unwrap(), vec![1, 3]);
        assert!(power_of_choice_baseline(&[1.0], 2).is_err());
    }

    #[test]
    fn empirical_needs_k_sources() {
        use crate::estimators::build_moment_proxies;
        use crate::simgen::{Population, PopulationConfig};
        let pop = Population::generate(&PopulationConfig {
            m: 5,
            ..Default::default()
        })
        .unwrap();
        let proxies = build_moment_proxies(&pop.sources).unwrap();
        assert!(matches!(
            empirical_search(&proxies, 6, &ScreeningConfig::default(), 0, &mut rng(0)),
            Err(Error::InsufficientSources { m: 5, k: 6 })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = ScreeningConfig {
            delta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScreeningConfig {
            c: BatchConstant::Practical(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&ScreeningConfig::default()).unwrap();
        let back: ScreeningConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ScreeningConfig::default());
        let theo: ScreeningConfig = serde_json::from_str(r#"{"c": "theoretical"}"#).unwrap();
        assert_eq!(theo.c, BatchConstant::Theoretical);
    }

    #[test]
    fn haar_frame_is_perfect_batch() {
        // A batch of exactly orthonormal columns has H = 0 and is kept whole.
        let q = haar_orthonormal(6, 6, &mut rng(12));
        let heads = HeadMatrix::new(q).unwrap();
        let cfg = ScreeningConfig {
            c: BatchConstant::Practical(1.0),
            min_batch: None,
            ..Default::default()
        };
        let res = genie_search(&heads, &cfg, 0, &mut rng(12)).unwrap();
        assert_eq!(res.batches.first().map(Vec::len), Some(6));
        assert_eq!(res.selected, (0..6).collect::<Vec<_>>());
    }
}
