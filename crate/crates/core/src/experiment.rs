//! End-to-end synthetic experiments: generate data, fit the standard and fair
//! estimators on it, and evaluate both.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::FitConfig;
use crate::dataset::{group_stats, GroupedDataset};
use crate::disparity::disparity_report;
use crate::error::{FairGmError, Result};
use crate::estimate::GraphEstimate;
use crate::ista::{fit_locals, fit_standard};
use crate::linalg::{l1_norm, Mat, SpdFactor};
use crate::metrics::{compare_runs, pcee_gap_report, EvalReport, PceeVariant, RunSummary};
use crate::models::{Model, ModelKind};
use crate::moo::{fit_fair_with_locals, FairFit};
use crate::synth::{
    check_block_params, check_hub_params, gen_block_covariances, gen_hub_networks_with,
    gibbs_sample_ising, sample_mvn, GroundTruth, TruthKind, DEFAULT_BURN_IN, DEFAULT_THINNING,
};

/// A synthetic data-generating setup. Group `k` is sampled from RNG stream `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scenario {
    Gaussian {
        p: usize,
        q: usize,
        resets: usize,
        sizes: Vec<usize>,
    },
    Ising {
        p: usize,
        hubs: usize,
        removals: usize,
        sizes: Vec<usize>,
        burn_in: usize,
        thinning: usize,
    },
}

impl Scenario {
    /// Two groups of 1000 draws from 100-dimensional block covariances (5 blocks, 2 resets).
    pub fn sim_gaussian() -> Self {
        Scenario::Gaussian {
            p: 100,
            q: 5,
            resets: 2,
            sizes: vec![1000, 1000],
        }
    }

    /// Ising hub networks on 50 nodes: three hubs, two removed for the second group.
    pub fn sim_ising() -> Self {
        Scenario::Ising {
            p: 50,
            hubs: 3,
            removals: 2,
            sizes: vec![500, 1000],
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
        }
    }

    pub fn n_groups(&self) -> usize {
        match self {
            Scenario::Gaussian { sizes, .. } | Scenario::Ising { sizes, .. } => sizes.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Scenario::Gaussian { p, .. } | Scenario::Ising { p, .. } => *p,
        }
    }

    /// Checks the generator parameters and group sizes without generating anything.
    pub fn validate(&self) -> Result<()> {
        let sizes = match self {
            Scenario::Gaussian {
                p,
                q,
                resets,
                sizes,
            } => {
                check_block_params(*p, *q, sizes.len(), *resets)?;
                sizes
            }
            Scenario::Ising {
                p,
                hubs,
                removals,
                sizes,
                thinning,
                ..
            } => {
                check_hub_params(*p, *hubs, sizes.len(), *removals)?;
                if *thinning == 0 {
                    return Err(FairGmError::InvalidGenerator(
                        "thinning must be at least 1".into(),
                    ));
                }
                sizes
            }
        };
        if sizes.contains(&0) {
            return Err(FairGmError::InvalidGenerator(
                "every group needs at least one sample".into(),
            ));
        }
        Ok(())
    }

    pub fn generate_truth(&self, seed: u64) -> Result<GroundTruth> {
        self.validate()?;
        match self {
            Scenario::Gaussian {
                p,
                q,
                resets,
                sizes,
            } => gen_block_covariances(*p, *q, sizes.len(), *resets, seed),
            Scenario::Ising {
                p,
                hubs,
                removals,
                sizes,
                ..
            } => gen_hub_networks_with(*p, *hubs, sizes.len(), *removals, seed),
        }
    }

    /// Samples every group from `truth`.
    pub fn sample(&self, truth: &GroundTruth) -> Result<GroupedDataset> {
        let sizes = match self {
            Scenario::Gaussian { sizes, .. } | Scenario::Ising { sizes, .. } => sizes,
        };
        if truth.matrices.len() != sizes.len() {
            return Err(FairGmError::InvalidGenerator(format!(
                "{} group sizes for {} ground-truth matrices",
                sizes.len(),
                truth.matrices.len()
            )));
        }
        let blocks = truth
            .matrices
            .iter()
            .zip(sizes)
            .enumerate()
            .map(|(k, (m, &n))| {
                let stream = k as u64 + 1;
                match self {
                    Scenario::Gaussian { .. } => sample_mvn(m, n, truth.seed, stream),
                    Scenario::Ising {
                        burn_in, thinning, ..
                    } => gibbs_sample_ising(m, n, *burn_in, *thinning, truth.seed, stream),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        GroupedDataset::from_groups(&blocks)
    }

    pub fn generate(&self, seed: u64) -> Result<(GroundTruth, GroupedDataset)> {
        let truth = self.generate_truth(seed)?;
        let ds = self.sample(&truth)?;
        Ok((truth, ds))
    }
}

/// The graphs an estimate of `model` is compared against: precision matrices
/// for GLasso, covariances for CovGraph, interaction matrices for BinNet.
pub fn truth_graphs(model: ModelKind, truth: &GroundTruth) -> Result<Vec<Mat>> {
    match (model, truth.kind) {
        (ModelKind::GLasso, TruthKind::Covariance) => truth
            .matrices
            .iter()
            .map(|s| Ok(SpdFactor::new(s)?.inverse()))
            .collect(),
        (ModelKind::CovGraph, TruthKind::Covariance) | (ModelKind::BinNet, TruthKind::Ising) => {
            Ok(truth.matrices.clone())
        }
        (m, k) => Err(FairGmError::InvalidConfig(format!(
            "{} cannot be scored against {k:?} ground truth",
            m.name()
        ))),
    }
}

/// Both fits on one dataset and their comparison.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub standard: GraphEstimate,
    pub fair: FairFit,
    pub eval: EvalReport,
}

/// Penalized pooled objective `L(theta; X) + lambda ||theta||_1`.
pub fn pooled_objective(
    model: &Model,
    theta: &Mat,
    ds_stats: &crate::dataset::GroupStats,
    lambda: f64,
) -> Result<f64> {
    Ok(model.loss(theta, &ds_stats.pooled)? + lambda * l1_norm(theta))
}

/// Fits the standard and the fair estimator on `ds` and evaluates both.
/// The fair runtime includes the per-group fits it depends on.
pub fn compare_on(
    model: ModelKind,
    ds: &GroupedDataset,
    truths: Option<&[Mat]>,
    config: &FitConfig,
    variant: PceeVariant,
) -> Result<Comparison> {
    if model == ModelKind::BinNet {
        ds.require_binary()?;
    }
    let m = Model::new(model, config.tau);
    let stats = group_stats(ds);

    let t0 = Instant::now();
    let standard = fit_standard(&m, &stats, config)?;
    let runtime_standard = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let local = fit_locals(&m, &stats, config)?;
    let fair = fit_fair_with_locals(&m, &stats, local, config)?;
    let runtime_fair = t0.elapsed().as_secs_f64();

    let summarize = |theta: &Mat, runtime: f64| -> Result<RunSummary> {
        let delta_total = if stats.n_groups() >= 2 {
            disparity_report(&m, theta, config.penalty, &stats, &fair.local)?.total
        } else {
            0.0
        };
        let pcee = truths
            .map(|t| pcee_gap_report(theta, t, config.lambda, variant))
            .transpose()?;
        Ok(RunSummary {
            f1: pooled_objective(&m, theta, &stats, config.lambda)?,
            delta_total,
            runtime_secs: runtime,
            pcee,
        })
    };
    let eval = compare_runs(
        &summarize(&standard.matrix, runtime_standard)?,
        &summarize(&fair.estimate.matrix, runtime_fair)?,
    );
    Ok(Comparison {
        standard,
        fair,
        eval,
    })
}

/// One point of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub suite: String,
    /// Name and value of the varied parameter, if any.
    pub param: Option<(String, f64)>,
    pub model: ModelKind,
    pub scenario: Scenario,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub truth: GroundTruth,
    pub comparison: Comparison,
}

pub fn run_cell(cell: &Cell, config: &FitConfig, variant: PceeVariant) -> Result<CellOutcome> {
    let (truth, ds) = cell.scenario.generate(cell.seed)?;
    let truths = truth_graphs(cell.model, &truth)?;
    let comparison = compare_on(cell.model, &ds, Some(&truths), config, variant)?;
    Ok(CellOutcome {
        cell: cell.clone(),
        truth,
        comparison,
    })
}

/// Runs independent cells, in parallel when the `parallel` feature is on.
/// Results keep the input order; one failing cell does not stop the others.
pub fn run_cells(
    cells: &[Cell],
    config: &FitConfig,
    variant: PceeVariant,
) -> Vec<Result<CellOutcome>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|c| run_cell(c, config, variant))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        cells.iter().map(|c| run_cell(c, config, variant)).collect()
    }
}

/// Named experiment suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    SimGlasso,
    SimCovgraph,
    SimBinnet,
    SensP,
    SensN,
    SensRatio,
    SensK,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::SimGlasso,
        Suite::SimCovgraph,
        Suite::SimBinnet,
        Suite::SensP,
        Suite::SensN,
        Suite::SensRatio,
        Suite::SensK,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::SimGlasso => "sim-glasso",
            Suite::SimCovgraph => "sim-covgraph",
            Suite::SimBinnet => "sim-binnet",
            Suite::SensP => "sens-P",
            Suite::SensN => "sens-N",
            Suite::SensRatio => "sens-ratio",
            Suite::SensK => "sens-K",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FairGmError::InvalidConfig(format!("unknown suite '{s}'")))
    }

    pub fn model(self) -> ModelKind {
        match self {
            Suite::SimCovgraph => ModelKind::CovGraph,
            Suite::SimBinnet => ModelKind::BinNet,
            _ => ModelKind::GLasso,
        }
    }

    /// Name of the varied parameter.
    pub fn param_name(self) -> Option<&'static str> {
        match self {
            Suite::SensP => Some("P"),
            Suite::SensN => Some("N"),
            Suite::SensRatio => Some("ratio"),
            Suite::SensK => Some("K"),
            _ => None,
        }
    }

    /// Reduced default grids.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Suite::SensP => vec![50.0, 100.0, 200.0],
            Suite::SensN => vec![100.0, 200.0, 300.0, 400.0, 500.0],
            Suite::SensRatio => vec![1.0, 2.0, 4.0, 10.0],
            Suite::SensK => vec![2.0, 3.0, 4.0, 5.0, 6.0],
            _ => Vec::new(),
        }
    }

    /// Scenario at grid value `v` (ignored by the fixed simulation suites).
    pub fn scenario(self, v: f64) -> Result<Scenario> {
        let count = |what: &str| -> Result<usize> {
            if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(FairGmError::InvalidConfig(format!(
                    "{what} must be a positive integer, got {v}"
                )))
            }
        };
        Ok(match self {
            Suite::SimGlasso | Suite::SimCovgraph => Scenario::sim_gaussian(),
            Suite::SimBinnet => Scenario::sim_ising(),
            Suite::SensP => Scenario::Gaussian {
                p: count("P")?,
                q: 5,
                resets: 1,
                sizes: vec![1000, 1000],
            },
            Suite::SensN => {
                let n = count("N")?;
                Scenario::Gaussian {
                    p: 50,
                    q: 5,
                    resets: 1,
                    sizes: vec![n, n],
                }
            }
            Suite::SensRatio => {
                if !(v.is_finite() && v > 0.0) {
                    return Err(FairGmError::InvalidConfig(format!(
                        "ratio must be positive, got {v}"
                    )));
                }
                let n1 = ((v * 100.0).round() as usize).max(2);
                Scenario::Gaussian {
                    p: 50,
                    q: 5,
                    resets: 1,
                    sizes: vec![n1, 100],
                }
            }
            Suite::SensK => {
                let k = count("K")?;
                Scenario::Gaussian {
                    p: 100,
                    q: 10,
                    resets: 1,
                    sizes: vec![1000; k],
                }
            }
        })
    }

    /// All cells of the suite over `grid` (default grid when `None`) and `seeds`.
    pub fn cells(self, grid: Option<&[f64]>, seeds: &[u64]) -> Result<Vec<Cell>> {
        let mut out = Vec::new();
        let points: Vec<Option<f64>> = match self.param_name() {
            None => vec![None],
            Some(_) => {
                let g = grid
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| self.default_grid());
                if g.is_empty() {
                    return Err(FairGmError::InvalidConfig(format!(
                        "empty grid for {}",
                        self.name()
                    )));
                }
                g.into_iter().map(Some).collect()
            }
        };
        for v in points {
            let scenario = self.scenario(v.unwrap_or(f64::NAN))?;
            for &seed in seeds {
                out.push(Cell {
                    suite: self.name().to_string(),
                    param: v.map(|x| (self.param_name().unwrap().to_string(), x)),
                    model: self.model(),
                    scenario: scenario.clone(),
                    seed,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("sens-Q").is_err());
    }

    #[test]
    fn grids_expand_to_cells() {
        let cells = Suite::SensRatio
            .cells(Some(&[1.0, 4.0]), &[1, 2, 3])
            .unwrap();
        assert_eq!(cells.len(), 6);
        match &cells[3].scenario {
            Scenario::Gaussian { p, sizes, .. } => {
                assert_eq!(*p, 50);
                assert_eq!(sizes, &vec![400, 100]);
            }
            _ => panic!("expected a Gaussian scenario"),
        }
        let k = Suite::SensK.cells(Some(&[4.0]), &[0]).unwrap();
        assert_eq!(k[0].scenario.n_groups(), 4);
        assert!(Suite::SensK.cells(Some(&[2.5]), &[0]).is_err());
        assert_eq!(Suite::SimBinnet.cells(None, &[5]).unwrap().len(), 1);
    }

    #[test]
    fn small_gaussian_comparison() {
        let sc = Scenario::Gaussian {
            p: 6,
            q: 2,
            resets: 1,
            sizes: vec![200, 60],
        };
        let (truth, ds) = sc.generate(3).unwrap();
        assert_eq!(ds.group_sizes(), &[200, 60]);
        let truths = truth_graphs(ModelKind::GLasso, &truth).unwrap();
        let cfg = FitConfig::default().with_lambda(0.05).with_max_iter(5000);
        let c = compare_on(
            ModelKind::GLasso,
            &ds,
            Some(&truths),
            &cfg,
            PceeVariant::Absolute,
        )
        .unwrap();
        // The standard estimate minimizes F1, the fair one trades it for disparity.
        assert!(c.eval.f1_standard <= c.eval.f1_fair + 1e-6);
        assert!(c.eval.delta_fair <= c.eval.delta_standard);
        assert!(c.eval.pcee_fair.as_ref().unwrap().gap.is_some());
        assert!(truth_graphs(ModelKind::BinNet, &truth).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let sc = Scenario::Ising {
            p: 5,
            hubs: 2,
            removals: 1,
            sizes: vec![30, 40],
            burn_in: 50,
            thinning: 2,
        };
        let (_, a) = sc.generate(9).unwrap();
        let (_, b) = sc.generate(9).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.is_binary());
    }
}
