use serde::{Deserialize, Serialize};

use crate::error::{FairGmError, Result};

/// Penalty applied to pairwise differences of group disparity errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// `x^2 / 2`
    #[default]
    Square,
    /// `exp(x)`
    Exp,
    /// `|x|`, for evaluation only.
    Abs,
}

impl PenaltyKind {
    pub fn value(self, x: f64) -> f64 {
        match self {
            PenaltyKind::Square => 0.5 * x * x,
            PenaltyKind::Exp => x.exp(),
            PenaltyKind::Abs => x.abs(),
        }
    }

    pub fn derivative(self, x: f64) -> Result<f64> {
        match self {
            PenaltyKind::Square => Ok(x),
            PenaltyKind::Exp => Ok(x.exp()),
            PenaltyKind::Abs => Err(FairGmError::UnsupportedPenaltyGradient(self)),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(PenaltyKind::Square),
            "exp" => Ok(PenaltyKind::Exp),
            "abs" => Ok(PenaltyKind::Abs),
            other => Err(FairGmError::InvalidConfig(format!(
                "unknown penalty '{other}'"
            ))),
        }
    }
}

/// Stopping rule of the single-objective proximal gradient solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IstaStop {
    /// `ell * ||theta_next - theta||_1 <= eps` (norm of the composite gradient map).
    #[default]
    GradientMap,
    /// `||grad L(theta)||_1 <= eps`, which only terminates when the penalty is inactive.
    RawGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lambda: f64,
    /// Log-barrier weight of the covariance graph loss.
    pub tau: f64,
    /// Ridge weight on the disparity objectives; `None` selects it automatically.
    pub gamma: Option<f64>,
    pub penalty: PenaltyKind,
    pub eps: f64,
    pub max_iter: usize,
    /// First inverse step size tried.
    pub ell0: f64,
    /// Factor applied to `ell` after a rejected trial step.
    pub ell_growth: f64,
    /// Each iteration restarts the search at `max(ell0, ell_decay * previous ell)`.
    pub ell_decay: f64,
    pub ell_max: f64,
    pub ista_stop: IstaStop,
    pub dual_max_iter: usize,
    pub dual_tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            tau: 0.01,
            gamma: None,
            penalty: PenaltyKind::Square,
            eps: 1e-5,
            max_iter: 50_000,
            ell0: 1e-2,
            ell_growth: 10.0,
            ell_decay: 0.1,
            ell_max: 1e12,
            ista_stop: IstaStop::GradientMap,
            dual_max_iter: 500,
            dual_tol: 1e-8,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Classic backtracking: every iteration restarts at step 1 and halves it.
    pub fn halving() -> Self {
        Self {
            ell0: 1.0,
            ell_growth: 2.0,
            ell_decay: 0.0,
            ..Self::default()
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_penalty(mut self, penalty: PenaltyKind) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    /// First `ell` tried in an iteration, given the one accepted in the previous iteration.
    pub fn start_ell(&self, previous: Option<f64>) -> f64 {
        match previous {
            Some(prev) => self.ell0.max(prev * self.ell_decay),
            None => self.ell0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FairGmError::InvalidConfig(msg.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return bad("gamma must be finite and non-negative");
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.ell0.is_finite() && self.ell0 > 0.0) {
            return bad("ell0 must be positive");
        }
        if !(self.ell_growth > 1.0 && self.ell_growth.is_finite()) {
            return bad("ell_growth must exceed 1");
        }
        if !(0.0..=1.0).contains(&self.ell_decay) {
            return bad("ell_decay must lie in [0, 1]");
        }
        if !(self.ell_max > self.ell0) {
            return bad("ell_max must exceed ell0");
        }
        if self.dual_max_iter == 0 || !(self.dual_tol > 0.0) {
            return bad("dual solver settings must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_values() {
        assert_eq!(PenaltyKind::Square.value(-2.0), 2.0);
        assert_eq!(PenaltyKind::Exp.value(0.0), 1.0);
        assert_eq!(PenaltyKind::Abs.value(-3.0), 3.0);
        assert!(matches!(
            PenaltyKind::Abs.derivative(1.0),
            Err(FairGmError::UnsupportedPenaltyGradient(PenaltyKind::Abs))
        ));
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(FitConfig::default().validate().is_ok());
        assert!(FitConfig::default().with_lambda(-1.0).validate().is_err());
        assert!(FitConfig {
            tau: 0.0,
            ..FitConfig::default()
        }
        .validate()
        .is_err());
        assert!(FitConfig {
            ell_growth: 1.0,
            ..FitConfig::default()
        }
        .validate()
        .is_err());
    }
}
