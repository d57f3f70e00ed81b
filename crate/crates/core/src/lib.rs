//! Source screening for shared linear subspace learning.
//!
//! Simulate heterogeneous multi-source linear regression, pick a subset of
//! sources whose heads are well conditioned, and estimate the shared
//! subspace from the selected sources.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod ratebounds;
pub mod screening;
pub mod simgen;

pub use error::{Error, Result};
pub use estimators::{EstimatorKind, MomentProxies, SubspaceEstimate};
pub use harness::{Ablation, ExperimentConfig, ExperimentRecord, Method, OutputFormat, SweepParam};
pub use linalg::{DenseMatrix, FactorizationResult, NormBracket};
pub use ratebounds::RateInputs;
pub use screening::{HeadMatrix, ScreeningConfig, SelectionResult, TerminationReason};
pub use simgen::{GroundTruth, Population, PopulationConfig, Regime, SourceDataset};
