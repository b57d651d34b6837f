use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::models::ModelKind;

/// State of a solver after one accepted iteration.
///
/// Iteration 0 holds the starting point; its `ell`, `residual` are NaN and
/// `rho` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Objective values `F_k` at the accepted iterate.
    pub objectives: Vec<f64>,
    pub delta_total: Option<f64>,
    pub rho: Vec<f64>,
    pub ell: f64,
    /// Subproblem value `phi_ell(theta_next; theta)` of the accepted step.
    pub residual: f64,
    pub step_norm: f64,
    /// Trial steps rejected by the line search before this one was accepted.
    pub rejected: usize,
}

impl TraceRecord {
    pub fn initial(objectives: Vec<f64>, delta_total: Option<f64>) -> Self {
        Self {
            iter: 0,
            objectives,
            delta_total,
            rho: Vec::new(),
            ell: f64::NAN,
            residual: f64::NAN,
            step_norm: 0.0,
            rejected: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEstimate {
    pub matrix: Mat,
    pub model: ModelKind,
    pub is_pd: bool,
    pub converged: bool,
    /// The line search could no longer resolve a decrease in floating point.
    /// The iterate is a fixed point to working precision but the stop test was not met.
    pub stalled: bool,
    pub iterations: usize,
    /// Inverse step size of the last accepted iteration.
    pub final_ell: f64,
    /// Trial steps rejected because the candidate left the feasible set.
    pub infeasible_trials: usize,
    pub trace: Vec<TraceRecord>,
}

impl GraphEstimate {
    pub fn final_objectives(&self) -> &[f64] {
        &self
            .trace
            .last()
            .expect("trace always holds the starting point")
            .objectives
    }
}
