//! Evaluation criteria: pooled objective, disparity totals, edge recovery and trade-off percentages.

use serde::{Deserialize, Serialize};

use crate::error::{FairGmError, Result};
use crate::linalg::Mat;

/// How estimated entries are compared against the threshold in [`pcee`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PceeVariant {
    /// `|theta_hat| >= lambda`
    #[default]
    Absolute,
    /// `theta_hat >= lambda`, so negative estimates never count.
    Literal,
}

/// Proportion of true edges (`|theta| >= lambda`) that the estimate also
/// marks as edges. All entries, including the diagonal, are counted.
/// Returns `None` when the truth has no entry at level `lambda`.
pub fn pcee(
    theta_hat: &Mat,
    theta_true: &Mat,
    lambda: f64,
    variant: PceeVariant,
) -> Result<Option<f64>> {
    if theta_hat.shape() != theta_true.shape() {
        return Err(FairGmError::Shape(format!(
            "estimate is {:?} but truth is {:?}",
            theta_hat.shape(),
            theta_true.shape()
        )));
    }
    let mut hits = 0usize;
    let mut edges = 0usize;
    for (h, t) in theta_hat.iter().zip(theta_true.iter()) {
        if t.abs() >= lambda {
            edges += 1;
            let est = match variant {
                PceeVariant::Absolute => h.abs(),
                PceeVariant::Literal => *h,
            };
            if est >= lambda {
                hits += 1;
            }
        }
    }
    Ok((edges > 0).then(|| hits as f64 / edges as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceeGapReport {
    /// PCEE of the estimate against each group's truth; `None` when undefined.
    pub per_group: Vec<Option<f64>>,
    /// Largest minus smallest defined value.
    pub gap: Option<f64>,
    pub variant: PceeVariant,
}

pub fn pcee_gap_report(
    estimate: &Mat,
    truths: &[Mat],
    lambda: f64,
    variant: PceeVariant,
) -> Result<PceeGapReport> {
    let per_group = truths
        .iter()
        .map(|t| pcee(estimate, t, lambda, variant))
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = per_group.iter().flatten().copied().collect();
    let gap = (!defined.is_empty()).then(|| {
        defined.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - defined.iter().copied().fold(f64::INFINITY, f64::min)
    });
    Ok(PceeGapReport {
        per_group,
        gap,
        variant,
    })
}

/// `-(new - baseline) / baseline * 100`; positive values are improvements.
pub fn percent_change(baseline: f64, new: f64) -> Option<f64> {
    (baseline != 0.0 && baseline.is_finite() && new.is_finite())
        .then(|| -(new - baseline) / baseline * 100.0)
}

/// Measurements of one fitted estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub f1: f64,
    pub delta_total: f64,
    pub runtime_secs: f64,
    pub pcee: Option<PceeGapReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1_standard: f64,
    pub f1_fair: f64,
    pub pct_f1: Option<f64>,
    pub delta_standard: f64,
    pub delta_fair: f64,
    pub pct_delta: Option<f64>,
    pub runtime_standard: f64,
    pub runtime_fair: f64,
    pub pcee_standard: Option<PceeGapReport>,
    pub pcee_fair: Option<PceeGapReport>,
}

pub fn compare_runs(standard: &RunSummary, fair: &RunSummary) -> EvalReport {
    EvalReport {
        f1_standard: standard.f1,
        f1_fair: fair.f1,
        pct_f1: percent_change(standard.f1, fair.f1),
        delta_standard: standard.delta_total,
        delta_fair: fair.delta_total,
        pct_delta: percent_change(standard.delta_total, fair.delta_total),
        runtime_standard: standard.runtime_secs,
        runtime_fair: fair.runtime_secs,
        pcee_standard: standard.pcee.clone(),
        pcee_fair: fair.pcee.clone(),
    }
}
