//! Fair estimation of sparse graphical models.
//!
//! Fits sparse Gaussian precision matrices (graphical lasso), sparse
//! covariance matrices and binary Ising networks jointly over several groups
//! of observations, trading the pooled fit against the disparity of
//! per-group losses with a multi-objective proximal gradient method.

// `!(x > 0.0)` is used on purpose so NaN fails the check; matrix loops index by position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dataset;
pub mod disparity;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod ista;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod moo;
pub mod synth;

pub use config::{FitConfig, IstaStop, PenaltyKind};
pub use dataset::{group_stats, validate_dataset, GroupStats, GroupedDataset, Moments};
pub use disparity::{DisparityReport, FairProblem, LocalSolutions, ObjectiveVector};
pub use error::{FairGmError, Result};
pub use estimate::{GraphEstimate, TraceRecord};
pub use ista::{fit_locals, fit_single, fit_standard, soft_threshold};
pub use linalg::Mat;
pub use models::{Model, ModelKind};
pub use moo::{fit_fair, solve_subproblem, FairFit};
