//! Experiment harness: generate populations, run selectors, fit estimators
//! on the selected sources and score them against the true basis.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{build_moment_proxies, local_refit_losses, EstimatorKind};
use crate::linalg::principal_angle_distance;
use crate::screening::{
    balanced_baseline, empirical_search, genie_search, power_of_choice_baseline, random_baseline, HeadMatrix,
    ScreeningConfig,
};
use crate::simgen::{stream_rng, streams, Population, PopulationConfig, Regime, SourceDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Full,
    Random,
    PowerOfChoice,
    Balanced,
    Genie,
    Empirical,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Full,
        Method::Random,
        Method::PowerOfChoice,
        Method::Balanced,
        Method::Genie,
        Method::Empirical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Random => "random",
            Method::PowerOfChoice => "power_of_choice",
            Method::Balanced => "balanced",
            Method::Genie => "genie",
            Method::Empirical => "empirical",
        }
    }

    fn stream(self) -> u64 {
        streams::SELECTOR_BASE + self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    K,
    D,
    M,
    G,
    N,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::D => "d",
            SweepParam::M => "m",
            SweepParam::G => "g",
            SweepParam::N => "n",
        }
    }

    /// Default grid for each swept quantity. `N` is the total sample count,
    /// split evenly over the sources.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::K => vec![2.0, 4.0, 6.0, 8.0, 10.0],
            SweepParam::D => vec![20.0, 30.0, 40.0, 60.0],
            SweepParam::M => vec![40.0, 70.0, 100.0, 200.0],
            SweepParam::G => vec![0.1, 0.2, 0.3, 0.5],
            SweepParam::N => vec![1000.0, 2000.0, 4000.0, 8000.0],
        }
    }

    pub fn apply(self, base: &PopulationConfig, value: f64) -> Result<PopulationConfig> {
        let mut cfg = base.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::config(format!(
                    "{} must be a positive integer, got {value}",
                    self.name()
                )))
            }
        };
        match self {
            SweepParam::K | SweepParam::M if matches!(cfg.regime, Regime::Orthogonal { .. }) => {
                return Err(Error::config(format!(
                    "sweeping {} conflicts with fixed orthogonal multiplicities",
                    self.name()
                )));
            }
            SweepParam::K => cfg.k = count()?,
            SweepParam::D => cfg.d = count()?,
            SweepParam::M => cfg.m = count()?,
            SweepParam::G => match &mut cfg.regime {
                Regime::Clustered { g } => *g = value,
                _ => return Err(Error::config("sweeping g needs the clustered regime")),
            },
            SweepParam::N => {
                let per_source = count()? / cfg.m;
                cfg.n_range = Some([per_source, per_source]);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablation {
    pub param: SweepParam,
    /// Grid to sweep; the default grid for `param` when absent.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

impl Ablation {
    pub fn grid(&self) -> Vec<f64> {
        self.values.clone().unwrap_or_else(|| self.param.default_grid())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population: PopulationConfig,
    pub methods: Vec<Method>,
    pub estimators: Vec<EstimatorKind>,
    pub screening: ScreeningConfig,
    pub seeds: Vec<u64>,
    pub ablation: Option<Ablation>,
    /// Measure wall time per record. Off by default because timings make
    /// otherwise identical result files differ.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            population: PopulationConfig::default(),
            methods: Method::ALL.to_vec(),
            estimators: vec![EstimatorKind::SplitAveraging, EstimatorKind::Mom],
            screening: ScreeningConfig::default(),
            seeds: (0..20).collect(),
            ablation: None,
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.estimators.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("methods, estimators and seeds must be nonempty"));
        }
        self.screening.validate()?;
        for point in self.sweep_points()? {
            point.1.validate()?;
        }
        Ok(())
    }

    /// `(swept value, population config)` for every sweep point.
    fn sweep_points(&self) -> Result<Vec<(Option<f64>, PopulationConfig)>> {
        match &self.ablation {
            None => Ok(vec![(None, self.population.clone())]),
            Some(ab) => ab
                .grid()
                .into_iter()
                .map(|v| Ok((Some(v), ab.param.apply(&self.population, v)?)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub estimator: EstimatorKind,
    pub regime: String,
    pub seed: u64,
    pub swept_param: Option<SweepParam>,
    pub swept_value: Option<f64>,
    /// Principal angle distance to the true basis; absent when estimation failed.
    pub error_sin_theta: Option<f64>,
    pub subset_size: usize,
    pub wall_ms: Option<f64>,
    pub screening_reason: String,
}

/// A selector's output before estimation.
struct Selection {
    indices: Vec<usize>,
    reason: String,
    elapsed_ms: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Runs every (sweep point, seed, method, estimator) combination. Records come
/// back ordered by sweep point, seed, method and estimator regardless of
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let mut estimators: Vec<EstimatorKind> = Vec::new();
    for &e in &cfg.estimators {
        if e == EstimatorKind::Dfht {
            log::warn!("estimator `dfht` is not implemented in this build; skipping it");
        } else if !estimators.contains(&e) {
            estimators.push(e);
        }
    }
    estimators.sort();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let tasks: Vec<(usize, Option<f64>, PopulationConfig, u64)> = cfg
        .sweep_points()?
        .into_iter()
        .enumerate()
        .flat_map(|(i, (v, pc))| cfg.seeds.iter().map(move |&s| (i, v, pc.clone(), s)))
        .collect();
    let swept_param = cfg.ablation.as_ref().map(|a| a.param);
    let mut chunks: Vec<(usize, u64, Vec<ExperimentRecord>)> = tasks
        .into_par_iter()
        .map(|(i, v, pc, seed)| {
            let recs = run_one(
                cfg,
                &methods,
                &estimators,
                PopulationConfig { seed, ..pc },
                swept_param,
                v,
            )?;
            Ok((i, seed, recs))
        })
        .collect::<Result<Vec<_>>>()?;
    chunks.sort_by_key(|c| (c.0, c.1));
    Ok(chunks.into_iter().flat_map(|c| c.2).collect())
}

fn run_one(
    cfg: &ExperimentConfig,
    methods: &[Method],
    estimators: &[EstimatorKind],
    pop_cfg: PopulationConfig,
    swept_param: Option<SweepParam>,
    swept_value: Option<f64>,
) -> Result<Vec<ExperimentRecord>> {
    let seed = pop_cfg.seed;
    let pop = Population::generate(&pop_cfg)?;
    let k = pop_cfg.k;
    let m = pop_cfg.m;
    let regime = pop_cfg.regime.label().to_string();

    // Screening selectors first: the baselines are size-matched to them.
    let mut fixed: BTreeMap<Method, Selection> = BTreeMap::new();
    for &method in methods {
        let mut rng = stream_rng(seed, method.stream());
        let sel = match method {
            Method::Genie => {
                let (res, ms) = timed(|| -> Result<_> {
                    let heads = HeadMatrix::normalized(pop.truth.heads.clone())?;
                    genie_search(&heads, &cfg.screening, seed, &mut rng)
                });
                let res = res?;
                Selection {
                    indices: res.selected,
                    reason: res.reason.label().into(),
                    elapsed_ms: ms,
                }
            }
            Method::Empirical => {
                let (res, ms) = timed(|| -> Result<_> {
                    let proxies = build_moment_proxies(&pop.sources)?;
                    empirical_search(&proxies, k, &cfg.screening, seed, &mut rng)
                });
                let res = res?;
                Selection {
                    indices: res.selected,
                    reason: res.reason.label().into(),
                    elapsed_ms: ms,
                }
            }
            Method::Balanced => {
                let Some(labels) = pop.truth.cluster_labels.as_ref() else {
                    log::warn!("balanced baseline needs group labels; skipping it for {regime}");
                    continue;
                };
                let groups = labels.iter().copied().max().map_or(0, |g| g + 1);
                let quota = (0..groups)
                    .map(|g| labels.iter().filter(|&&l| l == g).count())
                    .filter(|&c| c > 0)
                    .min()
                    .unwrap_or(0);
                let (res, ms) = timed(|| balanced_baseline(labels, quota, &mut rng));
                Selection {
                    indices: res?,
                    reason: format!("quota:{quota}"),
                    elapsed_ms: ms,
                }
            }
            Method::Full => Selection {
                indices: (0..m).collect(),
                reason: "full".into(),
                elapsed_ms: 0.0,
            },
            Method::Random | Method::PowerOfChoice => continue,
        };
        fixed.insert(method, sel);
    }

    let reference = [Method::Empirical, Method::Genie, Method::Balanced]
        .into_iter()
        .find(|r| fixed.contains_key(r));
    let matched = reference.map_or(m, |r| fixed[&r].indices.len());
    let matched_reason = reference.map_or("matched:full".to_string(), |r| format!("matched:{r}"));
    if methods.contains(&Method::Random) {
        let mut rng = stream_rng(seed, Method::Random.stream());
        let (res, ms) = timed(|| random_baseline(m, matched, &mut rng));
        fixed.insert(
            Method::Random,
            Selection {
                indices: res?,
                reason: matched_reason.clone(),
                elapsed_ms: ms,
            },
        );
    }

    let mut records = Vec::new();
    for &method in methods {
        for &est in estimators {
            let selection = if method == Method::PowerOfChoice {
                let (res, ms) = timed(|| -> Result<Vec<usize>> {
                    let first = est.estimate(&pop.sources, k)?;
                    let losses = local_refit_losses(&pop.sources, &first.basis)?;
                    power_of_choice_baseline(&losses, matched)
                });
                match res {
                    Ok(indices) => Selection {
                        indices,
                        reason: matched_reason.clone(),
                        elapsed_ms: ms,
                    },
                    Err(e) => {
                        records.push(record(
                            &pop_cfg,
                            method,
                            est,
                            &regime,
                            swept_param,
                            swept_value,
                            None,
                            0,
                            None,
                            format!("selector_failed: {e}"),
                        ));
                        continue;
                    }
                }
            } else {
                match fixed.get(&method) {
                    Some(s) => Selection {
                        indices: s.indices.clone(),
                        reason: s.reason.clone(),
                        elapsed_ms: s.elapsed_ms,
                    },
                    None => continue,
                }
            };
            let subset: Vec<&SourceDataset> = selection.indices.iter().map(|&i| &pop.sources[i]).collect();
            let (fit, ms) = timed(|| est.estimate(&subset, k));
            let (error, reason) = match fit.and_then(|f| principal_angle_distance(&f.basis, &pop.truth.shared_basis)) {
                Ok(e) => (Some(e), selection.reason),
                Err(e) => (None, format!("{}; estimator_failed: {e}", selection.reason)),
            };
            let wall = cfg.record_wall_time.then_some(selection.elapsed_ms + ms);
            records.push(record(
                &pop_cfg,
                method,
                est,
                &regime,
                swept_param,
                swept_value,
                error,
                selection.indices.len(),
                wall,
                reason,
            ));
        }
    }
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn record(
    pop_cfg: &PopulationConfig,
    method: Method,
    estimator: EstimatorKind,
    regime: &str,
    swept_param: Option<SweepParam>,
    swept_value: Option<f64>,
    error_sin_theta: Option<f64>,
    subset_size: usize,
    wall_ms: Option<f64>,
    screening_reason: String,
) -> ExperimentRecord {
    ExperimentRecord {
        method,
        estimator,
        regime: regime.to_string(),
        seed: pop_cfg.seed,
        swept_param,
        swept_value,
        error_sin_theta,
        subset_size,
        wall_ms,
        screening_reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config(format!("unknown format `{other}`"))),
        }
    }
}

pub const RESULT_COLUMNS: [&str; 10] = [
    "method",
    "estimator",
    "regime",
    "seed",
    "swept_param",
    "swept_value",
    "error_sin_theta",
    "subset_size",
    "wall_ms",
    "screening_reason",
];

pub fn emit_results(records: &[ExperimentRecord], path: &Path, format: OutputFormat) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Domain("no records to write".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, records)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_results(path: &Path, format: OutputFormat) -> Result<Vec<ExperimentRecord>> {
    let file = BufReader::new(File::open(path)?);
    match format {
        OutputFormat::Csv => csv::Reader::from_reader(file)
            .deserialize()
            .map(|r| r.map_err(Error::from))
            .collect(),
        OutputFormat::Json => Ok(serde_json::from_reader(file)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Method,
    Estimator,
    Regime,
    SweptValue,
}

impl GroupKey {
    pub fn name(self) -> &'static str {
        match self {
            GroupKey::Method => "method",
            GroupKey::Estimator => "estimator",
            GroupKey::Regime => "regime",
            GroupKey::SweptValue => "swept_value",
        }
    }

    fn value(self, r: &ExperimentRecord) -> String {
        match self {
            GroupKey::Method => r.method.name().into(),
            GroupKey::Estimator => r.estimator.name().into(),
            GroupKey::Regime => r.regime.clone(),
            GroupKey::SweptValue => r.swept_value.map(|v| v.to_string()).unwrap_or_default(),
        }
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            GroupKey::Method,
            GroupKey::Estimator,
            GroupKey::Regime,
            GroupKey::SweptValue,
        ]
        .into_iter()
        .find(|g| g.name() == s)
        .ok_or_else(|| Error::config(format!("unknown group key `{s}`")))
    }
}

/// Summary of one group of records.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub key: Vec<String>,
    /// Records with a finite error.
    pub n: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    pub std_error: Option<f64>,
}

pub fn summarize(records: &[ExperimentRecord], group_by: &[GroupKey]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<Vec<String>, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let key: Vec<String> = group_by.iter().map(|g| g.value(r)).collect();
        let entry = groups.entry(key).or_default();
        match r.error_sin_theta {
            Some(e) if e.is_finite() => entry.0.push(e),
            _ => entry.1 += 1,
        }
    }
    groups
        .into_iter()
        .map(|(key, (errs, failed))| {
            let n = errs.len();
            let mean = (n > 0).then(|| errs.iter().sum::<f64>() / n as f64);
            let std_error = mean.map(|mu| {
                if n < 2 {
                    0.0
                } else {
                    let var = errs.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                }
            });
            GroupSummary {
                key,
                n,
                failed,
                mean,
                std_error,
            }
        })
        .collect()
}

/// Long-format CSV: the group columns, then `n,failed,mean_error,std_error,flag`.
/// `flag` is `single_seed` when the standard error rests on one value and
/// `no_estimates` when every record of the group failed.
pub fn emit_plotdata(records: &[ExperimentRecord], group_by: &[GroupKey], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Domain("no records to summarise".into()));
    }
    if group_by.is_empty() {
        return Err(Error::config("group_by must name at least one column"));
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<&str> = group_by.iter().map(|g| g.name()).collect();
    header.extend(["n", "failed", "mean_error", "std_error", "flag"]);
    w.write_record(&header)?;
    for g in summarize(records, group_by) {
        let mut row = g.key.clone();
        row.push(g.n.to_string());
        row.push(g.failed.to_string());
        row.push(g.mean.map(|v| v.to_string()).unwrap_or_default());
        row.push(g.std_error.map(|v| v.to_string()).unwrap_or_default());
        row.push(
            match g.n {
                0 => "no_estimates",
                1 => "single_seed",
                _ => "",
            }
            .into(),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
