//! Browser bindings: small simulations, a standard-vs-fair comparison and a
//! Gibbs sampler check. Every export returns a JSON string.

use fairgm::disparity::disparity_report;
use fairgm::experiment::{pooled_objective, truth_graphs, Scenario};
use fairgm::metrics::{pcee_gap_report, percent_change, PceeVariant};
use fairgm::moo::fit_fair_with_locals;
use fairgm::synth::{
    empirical_distribution, exact_ising_distribution, gibbs_sample_ising, DEFAULT_BURN_IN,
    DEFAULT_THINNING,
};
use fairgm::{
    fit_locals, fit_standard, group_stats, FairGmError, FitConfig, Mat, Model, ModelKind,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Row-major square matrix.
#[derive(Serialize)]
pub struct Grid {
    pub n: usize,
    pub values: Vec<f64>,
}

impl From<&Mat> for Grid {
    fn from(m: &Mat) -> Self {
        Grid {
            n: m.nrows(),
            values: m.transpose().as_slice().to_vec(),
        }
    }
}

#[derive(Serialize)]
pub struct Simulation {
    pub kind: &'static str,
    pub truths: Vec<Grid>,
}

#[derive(Serialize)]
pub struct RunView {
    pub matrix: Grid,
    pub f1: f64,
    pub delta: f64,
    pub pcee_gap: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Serialize)]
pub struct ComparisonView {
    pub truths: Vec<Grid>,
    pub standard: RunView,
    pub fair: RunView,
    pub pct_f1: Option<f64>,
    pub pct_delta: Option<f64>,
}

#[derive(Serialize)]
pub struct GibbsView {
    pub p: usize,
    pub n: usize,
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
    pub total_variation: f64,
}

fn scenario(kind: ModelKind, p: usize, n1: usize, n2: usize) -> Scenario {
    let sizes = vec![n1, n2];
    match kind {
        ModelKind::BinNet => Scenario::Ising {
            p,
            hubs: 3.min(p / 4).max(1),
            removals: 1,
            sizes,
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
        },
        _ => Scenario::Gaussian {
            p,
            q: 2.min(p / 2).max(1),
            resets: 1,
            sizes,
        },
    }
}

pub fn simulate_json(model: &str, p: usize, seed: u64) -> Result<String, FairGmError> {
    let kind = ModelKind::parse(model)?;
    let truth = scenario(kind, p, 1, 1).generate_truth(seed)?;
    let graphs = truth_graphs(kind, &truth)?;
    let sim = Simulation {
        kind: kind.name(),
        truths: graphs.iter().map(Grid::from).collect(),
    };
    Ok(serde_json::to_string(&sim).expect("serializable"))
}

pub fn compare_json(
    model: &str,
    p: usize,
    n1: usize,
    n2: usize,
    lambda: f64,
    seed: u64,
) -> Result<String, FairGmError> {
    let kind = ModelKind::parse(model)?;
    let (truth, ds) = scenario(kind, p, n1, n2).generate(seed)?;
    let truths = truth_graphs(kind, &truth)?;
    let config = FitConfig::default().with_lambda(lambda).with_max_iter(5000);
    let m = Model::new(kind, config.tau);
    let stats = group_stats(&ds);
    let standard = fit_standard(&m, &stats, &config)?;
    let local = fit_locals(&m, &stats, &config)?;
    let fair = fit_fair_with_locals(&m, &stats, local, &config)?;
    let view = |est: &fairgm::GraphEstimate| -> Result<RunView, FairGmError> {
        Ok(RunView {
            matrix: Grid::from(&est.matrix),
            f1: pooled_objective(&m, &est.matrix, &stats, lambda)?,
            delta: disparity_report(&m, &est.matrix, config.penalty, &stats, &fair.local)?.total,
            pcee_gap: pcee_gap_report(&est.matrix, &truths, lambda, PceeVariant::Absolute)?.gap,
            iterations: est.iterations,
            converged: est.converged,
        })
    };
    let standard = view(&standard)?;
    let fair = view(&fair.estimate)?;
    let out = ComparisonView {
        truths: truths.iter().map(Grid::from).collect(),
        pct_f1: percent_change(standard.f1, fair.f1),
        pct_delta: percent_change(standard.delta, fair.delta),
        standard,
        fair,
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

/// Samples an Ising model with couplings of size `coupling` on a cycle and
/// compares the empirical state frequencies with exact enumeration.
pub fn gibbs_json(p: usize, n: usize, coupling: f64, seed: u64) -> Result<String, FairGmError> {
    if !(1..=8).contains(&p) {
        return Err(FairGmError::InvalidGenerator(
            "exact enumeration needs 1 to 8 nodes".into(),
        ));
    }
    let mut theta = Mat::from_diagonal_element(p, p, -0.5 * coupling);
    for i in 0..p {
        let j = (i + 1) % p;
        if i != j {
            theta[(i, j)] = coupling;
            theta[(j, i)] = coupling;
        }
    }
    let samples = gibbs_sample_ising(&theta, n, DEFAULT_BURN_IN, DEFAULT_THINNING, seed, 0)?;
    let exact = exact_ising_distribution(&theta)?;
    let empirical = empirical_distribution(&samples);
    let total_variation = fairgm::synth::total_variation(&exact, &empirical);
    Ok(serde_json::to_string(&GibbsView {
        p,
        n,
        exact,
        empirical,
        total_variation,
    })
    .expect("serializable"))
}

fn js(r: Result<String, FairGmError>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Ground-truth graphs of a two-group simulation.
#[wasm_bindgen]
pub fn simulate(model: &str, p: usize, seed: u32) -> Result<String, JsValue> {
    js(simulate_json(model, p, seed.into()))
}

/// Simulates two groups and fits the standard and the fair estimator.
#[wasm_bindgen]
pub fn compare(
    model: &str,
    p: usize,
    n1: usize,
    n2: usize,
    lambda: f64,
    seed: u32,
) -> Result<String, JsValue> {
    js(compare_json(model, p, n1, n2, lambda, seed.into()))
}

#[wasm_bindgen]
pub fn gibbs(p: usize, n: usize, coupling: f64, seed: u32) -> Result<String, JsValue> {
    js(gibbs_json(p, n, coupling, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_returns_two_graphs() {
        let v: serde_json::Value =
            serde_json::from_str(&simulate_json("glasso", 8, 1).unwrap()).unwrap();
        assert_eq!(v["truths"].as_array().unwrap().len(), 2);
        assert_eq!(v["truths"][0]["values"].as_array().unwrap().len(), 64);
        assert!(simulate_json("nope", 8, 1).is_err());
    }

    #[test]
    fn compare_reduces_disparity() {
        let v: serde_json::Value =
            serde_json::from_str(&compare_json("glasso", 8, 200, 100, 0.05, 3).unwrap()).unwrap();
        let (ds, df) = (
            v["standard"]["delta"].as_f64().unwrap(),
            v["fair"]["delta"].as_f64().unwrap(),
        );
        assert!(df < ds, "{df} !< {ds}");
    }

    #[test]
    fn gibbs_matches_enumeration() {
        let v: serde_json::Value =
            serde_json::from_str(&gibbs_json(3, 20_000, 0.7, 2).unwrap()).unwrap();
        assert!(v["total_variation"].as_f64().unwrap() < 0.05);
        assert_eq!(v["exact"].as_array().unwrap().len(), 8);
        assert!(gibbs_json(12, 10, 0.5, 1).is_err());
    }
}
