//! Losses and gradients of the three graphical-model families.

use serde::{Deserialize, Serialize};

use crate::dataset::Moments;
use crate::error::{FairGmError, Result};
use crate::linalg::{check_square, compensated_sum, frob_dot, is_pd, symmetrize, Mat, SpdFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Sparse inverse covariance (graphical lasso).
    GLasso,
    /// Sparse covariance with a log-determinant barrier.
    CovGraph,
    /// Binary Ising network fitted by pseudo-likelihood.
    BinNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibleSet {
    SymmetricPd,
    Symmetric,
}

impl ModelKind {
    pub fn feasible_set(self) -> FeasibleSet {
        match self {
            ModelKind::GLasso | ModelKind::CovGraph => FeasibleSet::SymmetricPd,
            ModelKind::BinNet => FeasibleSet::Symmetric,
        }
    }

    pub fn requires_pd(self) -> bool {
        self.feasible_set() == FeasibleSet::SymmetricPd
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GLasso => "glasso",
            ModelKind::CovGraph => "covgraph",
            ModelKind::BinNet => "binnet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glasso" => Ok(ModelKind::GLasso),
            "covgraph" => Ok(ModelKind::CovGraph),
            "binnet" | "ising" => Ok(ModelKind::BinNet),
            other => Err(FairGmError::InvalidConfig(format!(
                "unknown model '{other}'"
            ))),
        }
    }
}

/// `-log det(theta) + tr(S theta)`
pub fn glasso_loss(theta: &Mat, s: &Mat) -> Result<f64> {
    check_square(s, theta.nrows(), "S")?;
    let f = SpdFactor::new(theta)?;
    Ok(-f.log_det() + frob_dot(s, theta))
}

/// `S - theta^{-1}`
pub fn glasso_grad(theta: &Mat, s: &Mat) -> Result<Mat> {
    check_square(s, theta.nrows(), "S")?;
    let f = SpdFactor::new(theta)?;
    Ok(symmetrize(&(s - f.inverse())))
}

/// `||sigma - S||_F^2 / 2 - tau log det(sigma)`
pub fn covgraph_loss(sigma: &Mat, s: &Mat, tau: f64) -> Result<f64> {
    check_square(s, sigma.nrows(), "S")?;
    let f = SpdFactor::new(sigma)?;
    Ok(0.5 * (sigma - s).norm_squared() - tau * f.log_det())
}

/// `sigma - S - tau sigma^{-1}`
pub fn covgraph_grad(sigma: &Mat, s: &Mat, tau: f64) -> Result<Mat> {
    check_square(s, sigma.nrows(), "S")?;
    let f = SpdFactor::new(sigma)?;
    Ok(symmetrize(&(sigma - s - f.inverse() * tau)))
}

fn require_binary(x: &Mat) -> Result<()> {
    if x.iter().all(|&v| v == 0.0 || v == 1.0) {
        Ok(())
    } else {
        Err(FairGmError::InvalidDataset(
            "binary data required for the Ising model".into(),
        ))
    }
}

fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Node-wise linear predictors `u_ij = theta_jj + sum_{j' != j} theta_jj' x_ij'`.
fn predictors(theta: &Mat, x: &Mat) -> Mat {
    let mut u = x * theta.transpose();
    for j in 0..theta.nrows() {
        let t = theta[(j, j)];
        for i in 0..x.nrows() {
            u[(i, j)] += t * (1.0 - x[(i, j)]);
        }
    }
    u
}

fn binnet_eval(theta: &Mat, x: &Mat, cross: &Mat, want_grad: bool) -> (f64, Option<Mat>) {
    let u = predictors(theta, x);
    // softplus(u) - x u per entry. Summing these instead of subtracting <theta, X'X>
    // avoids a cancellation that made the loss too noisy for the line search.
    let loss = compensated_sum(
        u.iter()
            .zip(x.iter())
            .map(|(&v, &b)| softplus(if b == 1.0 { -v } else { v })),
    );
    if !want_grad {
        return (loss, None);
    }
    let sig = u.map(sigmoid);
    let mut g = sig.transpose() * x;
    for j in 0..theta.nrows() {
        g[(j, j)] = sig.column(j).sum();
    }
    g -= cross;
    (loss, Some(g))
}

/// Negative log pseudo-likelihood of binary rows `x`, summed over rows.
pub fn binnet_loss(theta: &Mat, x: &Mat) -> Result<f64> {
    check_square(theta, x.ncols(), "theta")?;
    require_binary(x)?;
    let cross = x.transpose() * x;
    Ok(binnet_eval(theta, x, &cross, false).0)
}

/// Entrywise partial derivatives of [`binnet_loss`], treating every entry of
/// `theta` as a free variable. The result is not symmetric in general; the
/// derivative along a symmetric perturbation of `(j, j')` is `G[j][j'] + G[j'][j]`.
pub fn binnet_grad(theta: &Mat, x: &Mat) -> Result<Mat> {
    check_square(theta, x.ncols(), "theta")?;
    require_binary(x)?;
    let cross = x.transpose() * x;
    Ok(binnet_eval(theta, x, &cross, true).1.unwrap())
}

/// Symmetrizes `m` and reports whether it lies in the model's feasible set.
pub fn project_feasible(m: &Mat, kind: ModelKind) -> (Mat, bool) {
    let s = symmetrize(m);
    let ok = match kind.feasible_set() {
        FeasibleSet::SymmetricPd => is_pd(&s),
        FeasibleSet::Symmetric => s.iter().all(|v| v.is_finite()),
    };
    (s, ok)
}

/// A model family together with its loss hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub tau: f64,
}

impl Model {
    pub fn new(kind: ModelKind, tau: f64) -> Self {
        Self { kind, tau }
    }

    pub fn requires_pd(&self) -> bool {
        self.kind.requires_pd()
    }

    /// Default starting point: `diag(S) + 1e-3 I` for the Gaussian models
    /// (identity when `S` has a zero on its diagonal) and zero for BinNet.
    pub fn initial_point(&self, m: &Moments) -> Mat {
        let p = m.dim();
        match self.kind {
            ModelKind::BinNet => Mat::zeros(p, p),
            _ => {
                let d = m.cov.diagonal();
                if d.iter().any(|&v| !(v > 0.0)) {
                    Mat::identity(p, p)
                } else {
                    Mat::from_diagonal(&d.add_scalar(1e-3))
                }
            }
        }
    }

    /// Raw loss on each block; Gaussian models share one factorization.
    /// BinNet losses are per row, so groups of different sizes are comparable.
    pub fn losses(&self, theta: &Mat, blocks: &[&Moments]) -> Result<Vec<f64>> {
        match self.kind {
            ModelKind::GLasso => {
                let ld = SpdFactor::new(theta)?.log_det();
                Ok(blocks
                    .iter()
                    .map(|b| -ld + frob_dot(&b.cov, theta))
                    .collect())
            }
            ModelKind::CovGraph => {
                let ld = SpdFactor::new(theta)?.log_det();
                Ok(blocks
                    .iter()
                    .map(|b| 0.5 * (theta - &b.cov).norm_squared() - self.tau * ld)
                    .collect())
            }
            ModelKind::BinNet => Ok(blocks
                .iter()
                .map(|b| binnet_eval(theta, &b.rows, &b.cross, false).0 / b.n as f64)
                .collect()),
        }
    }

    /// Raw loss and its gradient on the space of symmetric matrices, per block.
    pub fn losses_and_grads(&self, theta: &Mat, blocks: &[&Moments]) -> Result<Vec<(f64, Mat)>> {
        match self.kind {
            ModelKind::GLasso => {
                let f = SpdFactor::new(theta)?;
                let (ld, inv) = (f.log_det(), f.inverse());
                Ok(blocks
                    .iter()
                    .map(|b| (-ld + frob_dot(&b.cov, theta), symmetrize(&(&b.cov - &inv))))
                    .collect())
            }
            ModelKind::CovGraph => {
                let f = SpdFactor::new(theta)?;
                let (ld, inv) = (f.log_det(), f.inverse());
                Ok(blocks
                    .iter()
                    .map(|b| {
                        let diff = theta - &b.cov;
                        (
                            0.5 * diff.norm_squared() - self.tau * ld,
                            symmetrize(&(diff - &inv * self.tau)),
                        )
                    })
                    .collect())
            }
            ModelKind::BinNet => Ok(blocks
                .iter()
                .map(|b| {
                    let (l, g) = binnet_eval(theta, &b.rows, &b.cross, true);
                    let n = b.n as f64;
                    (l / n, symmetrize(&g.unwrap()) / n)
                })
                .collect()),
        }
    }

    pub fn loss(&self, theta: &Mat, m: &Moments) -> Result<f64> {
        Ok(self.losses(theta, &[m])?[0])
    }

    pub fn loss_and_grad(&self, theta: &Mat, m: &Moments) -> Result<(f64, Mat)> {
        Ok(self.losses_and_grads(theta, &[m])?.pop().unwrap())
    }
}
