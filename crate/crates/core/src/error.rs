use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{size}x{size} matrix too large for enumeration (limit {limit})")]
    TooLargeForEnumeration { size: usize, limit: usize },

    #[error("basis columns are not orthonormal (deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("no eigenvalue exceeds the rank tolerance")]
    NoNonzeroEigenvalue,

    #[error("empty column selection")]
    EmptySelection,

    #[error("factorization infeasible up to level {level:.6e} (best residual {residual:.3e})")]
    Infeasible {
        level: f64,
        residual: f64,
        best_weights: Vec<f64>,
    },

    #[error("need at least k = {k} sources, got {m}")]
    InsufficientSources { m: usize, k: usize },

    #[error("estimator `{0}` is not available in this build")]
    EstimatorUnavailable(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
