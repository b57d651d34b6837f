//! Single-objective proximal gradient (ISTA) for the penalized pooled or per-group problem.

use crate::config::{FitConfig, IstaStop};
use crate::dataset::{GroupStats, Moments};
use crate::disparity::LocalSolutions;
use crate::error::{FairGmError, Result};
use crate::estimate::{GraphEstimate, TraceRecord};
use crate::linalg::{frob_dot, is_pd, l1_norm, Mat};
use crate::models::Model;

/// Elementwise `sign(x) max(|x| - t, 0)`.
pub fn soft_threshold(m: &Mat, t: f64) -> Mat {
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        *v -= v.max(-t).min(t);
    }
    out
}

/// Slack for comparisons of objective values that differ only by round-off.
pub(crate) fn roundoff(a: f64, b: f64) -> f64 {
    8.0 * f64::EPSILON * (a.abs() + b.abs())
}

/// True when a trial step moves the objective by less than `f` can resolve.
/// Growing the inverse step further cannot pass the descent test then, so the
/// step is taken and the solver stops unless its convergence test holds.
pub(crate) fn unresolvable(f: f64, fc: f64, predicted: f64) -> bool {
    let tol = roundoff(f, f);
    (fc - f).abs() <= tol && predicted.abs() <= tol
}

#[derive(Debug, Clone)]
pub struct IstaState {
    pub theta: Mat,
    pub ell: f64,
    pub iter: usize,
    pub loss: f64,
    pub grad: Mat,
}

impl IstaState {
    pub fn objective(&self, lambda: f64) -> f64 {
        self.loss + lambda * l1_norm(&self.theta)
    }
}

pub fn fit_single(model: &Model, block: &Moments, config: &FitConfig) -> Result<GraphEstimate> {
    fit_single_from(model, block, config, model.initial_point(block))
}

/// Pooled (standard) estimate over all groups.
pub fn fit_standard(
    model: &Model,
    stats: &GroupStats,
    config: &FitConfig,
) -> Result<GraphEstimate> {
    fit_single(model, &stats.pooled, config)
}

pub fn fit_single_from(
    model: &Model,
    block: &Moments,
    config: &FitConfig,
    init: Mat,
) -> Result<GraphEstimate> {
    config.validate()?;
    crate::linalg::check_square(&init, block.dim(), "initial point")?;
    let lambda = config.lambda;
    let (loss, grad) = model.loss_and_grad(&init, block)?;
    let mut state = IstaState {
        theta: init,
        ell: config.ell0,
        iter: 0,
        loss,
        grad,
    };
    let mut trace = vec![TraceRecord::initial(vec![state.objective(lambda)], None)];
    let mut infeasible_trials = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut previous_ell = None;

    while state.iter < config.max_iter {
        let mut ell = config.start_ell(previous_ell);
        let mut rejected = 0;
        let step = loop {
            if ell > config.ell_max {
                return Err(FairGmError::LineSearchFailed(ell));
            }
            let cand = soft_threshold(&(&state.theta - &state.grad / ell), lambda / ell);
            match model.loss(&cand, block) {
                Err(FairGmError::NotPositiveDefinite) => {
                    infeasible_trials += 1;
                }
                Err(e) => return Err(e),
                Ok(fc) => {
                    let d = &cand - &state.theta;
                    let bound =
                        state.loss + frob_dot(&state.grad, &d) + 0.5 * ell * d.norm_squared();
                    if fc <= bound + roundoff(fc, bound) {
                        break (cand, fc, d, false);
                    }
                    let g = lambda * (l1_norm(&cand) - l1_norm(&state.theta));
                    let f = state.objective(lambda);
                    if unresolvable(
                        f,
                        fc + lambda * l1_norm(&cand),
                        frob_dot(&state.grad, &d) + g,
                    ) {
                        break (cand, fc, d, true);
                    }
                }
            }
            rejected += 1;
            ell *= config.ell_growth;
        };
        let (cand, cand_loss, d, flat) = step;
        let g_old = lambda * l1_norm(&state.theta);
        let g_new = lambda * l1_norm(&cand);
        let residual = frob_dot(&state.grad, &d) + g_new - g_old + 0.5 * ell * d.norm_squared();
        let fixed_point = d.iter().all(|&v| v == 0.0);
        let (_, grad) = model.loss_and_grad(&cand, block)?;
        state = IstaState {
            theta: cand,
            ell,
            iter: state.iter + 1,
            loss: cand_loss,
            grad,
        };
        previous_ell = Some(ell);
        trace.push(TraceRecord {
            iter: state.iter,
            objectives: vec![state.objective(lambda)],
            delta_total: None,
            rho: vec![1.0],
            ell,
            residual,
            step_norm: d.norm(),
            rejected,
        });
        let stop = match config.ista_stop {
            IstaStop::GradientMap => ell * l1_norm(&d) <= config.eps,
            IstaStop::RawGradient => l1_norm(&state.grad) <= config.eps,
        };
        if stop || fixed_point {
            converged = true;
            break;
        }
        if flat {
            stalled = true;
            break;
        }
    }

    Ok(GraphEstimate {
        is_pd: is_pd(&state.theta),
        matrix: state.theta,
        model: model.kind,
        converged,
        stalled,
        iterations: state.iter,
        final_ell: state.ell,
        infeasible_trials,
        trace,
    })
}

/// Per-group solutions of the penalized problem, with their raw losses.
pub fn fit_locals(model: &Model, stats: &GroupStats, config: &FitConfig) -> Result<LocalSolutions> {
    let solve = |k: usize| -> Result<(Mat, f64, bool)> {
        let est = fit_single(model, &stats.groups[k], config)?;
        let loss = model.loss(&est.matrix, &stats.groups[k])?;
        Ok((est.matrix, loss, est.converged))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Mat, f64, bool)>> = {
        use rayon::prelude::*;
        (0..stats.n_groups()).into_par_iter().map(solve).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Mat, f64, bool)>> = (0..stats.n_groups()).map(solve).collect();

    let mut local = LocalSolutions {
        thetas: Vec::new(),
        losses: Vec::new(),
        converged: Vec::new(),
    };
    for r in results {
        let (t, l, c) = r?;
        local.thetas.push(t);
        local.losses.push(l);
        local.converged.push(c);
    }
    Ok(local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{group_stats, GroupedDataset};
    use crate::models::tests::random_spd;
    use crate::models::{covgraph_grad, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Brute-force minimizer of `(x - m)^2 / 2 + t |x|` on a grid.
    fn prox_grid(m: f64, t: f64) -> f64 {
        let step = 1e-4;
        let lo = m.min(0.0) - 1.0;
        let n = ((m.max(0.0) + 1.0 - lo) / step) as usize;
        (0..=n)
            .map(|i| lo + i as f64 * step)
            .min_by(|a, b| {
                let fa = 0.5 * (a - m).powi(2) + t * a.abs();
                let fb = 0.5 * (b - m).powi(2) + t * b.abs();
                fa.total_cmp(&fb)
            })
            .unwrap()
    }

    #[test]
    fn soft_threshold_examples() {
        let m = Mat::from_row_slice(1, 3, &[3.0, -2.0, 0.5]);
        assert_eq!(
            soft_threshold(&m, 1.0),
            Mat::from_row_slice(1, 3, &[2.0, -1.0, 0.0])
        );
        assert_eq!(soft_threshold(&m, 0.0), m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = Mat::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let s = soft_threshold(&r, 0.4);
        for (a, b) in s.iter().zip(r.iter()) {
            assert!((a - prox_grid(*b, 0.4)).abs() <= 1e-4);
        }
    }

    fn gaussian(n: usize, p: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn unpenalized_glasso_recovers_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(50, 2, 3) * random_spd(2, &mut rng);
        let m = Moments::new(x);
        let cfg = FitConfig::default().with_lambda(0.0).with_eps(1e-7);
        let est = fit_single(&Model::new(ModelKind::GLasso, 0.1), &m, &cfg).unwrap();
        assert!(est.converged && est.is_pd);
        let inv = m.cov.clone().try_inverse().unwrap();
        assert!((est.matrix - inv).amax() < 1e-4);
    }

    #[test]
    fn heavy_penalty_gives_diagonal_solution() {
        let m = Moments::new(gaussian(40, 4, 4));
        let lambda = 2.0 * m.cov.amax();
        let cfg = FitConfig::default().with_lambda(lambda).with_eps(1e-7);
        let est = fit_single(&Model::new(ModelKind::GLasso, 0.1), &m, &cfg).unwrap();
        assert!(est.converged);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j {
                    1.0 / (m.cov[(i, i)] + lambda)
                } else {
                    0.0
                };
                assert!((est.matrix[(i, j)] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn unpenalized_covgraph_is_stationary() {
        let m = Moments::new(gaussian(60, 3, 5));
        let tau = 1e-3;
        let cfg = FitConfig::default()
            .with_lambda(0.0)
            .with_tau(tau)
            .with_eps(1e-10);
        let est = fit_single(&Model::new(ModelKind::CovGraph, tau), &m, &cfg).unwrap();
        assert!(covgraph_grad(&est.matrix, &m.cov, tau).unwrap().amax() < 1e-6);
    }

    #[test]
    fn trace_is_monotone_and_feasible() {
        let m = Moments::new(gaussian(30, 5, 6));
        let cfg = FitConfig::default().with_lambda(0.05);
        let est = fit_single(&Model::new(ModelKind::GLasso, 0.1), &m, &cfg).unwrap();
        for w in est.trace.windows(2) {
            assert!(w[1].objectives[0] <= w[0].objectives[0] + 1e-12);
        }
        assert!(est.is_pd);
        assert_eq!(est.matrix, est.matrix.transpose());
    }

    #[test]
    fn fixed_point_terminates_immediately() {
        let m = Moments::new(gaussian(30, 3, 7));
        let model = Model::new(ModelKind::GLasso, 0.1);
        let cfg = FitConfig::default().with_lambda(0.05).with_eps(1e-12);
        let first = fit_single(&model, &m, &cfg).unwrap();
        let again = fit_single_from(
            &model,
            &m,
            &cfg.clone().with_eps(1e-6),
            first.matrix.clone(),
        )
        .unwrap();
        assert!(again.converged);
        assert!(again.iterations <= 2);
    }

    #[test]
    fn locals_of_identical_groups_agree() {
        let x = gaussian(40, 3, 8);
        let ds = GroupedDataset::from_groups(&[x.clone(), x]).unwrap();
        let stats = group_stats(&ds);
        let model = Model::new(ModelKind::GLasso, 0.1);
        let cfg = FitConfig::default().with_lambda(0.05).with_eps(1e-8);
        let local = fit_locals(&model, &stats, &cfg).unwrap();
        assert_eq!(local.n_groups(), 2);
        assert!((&local.thetas[0] - &local.thetas[1]).amax() < 1e-10);
    }

    #[test]
    fn local_objective_beats_pooled_on_own_data() {
        let a = gaussian(40, 3, 9);
        let b = gaussian(25, 3, 10) * 2.0;
        let stats = group_stats(&GroupedDataset::from_groups(&[a, b]).unwrap());
        let model = Model::new(ModelKind::GLasso, 0.1);
        let cfg = FitConfig::default().with_lambda(0.05).with_eps(1e-8);
        let local = fit_locals(&model, &stats, &cfg).unwrap();
        let pooled = fit_standard(&model, &stats, &cfg).unwrap();
        for k in 0..2 {
            let own = local.losses[k] + 0.05 * l1_norm(&local.thetas[k]);
            let other = model.loss(&pooled.matrix, &stats.groups[k]).unwrap()
                + 0.05 * l1_norm(&pooled.matrix);
            assert!(own <= other + 1e-8);
        }
    }

    #[test]
    fn binnet_fit_runs_without_pd_requirement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Mat::from_fn(80, 4, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        let m = Moments::new(x);
        let cfg = FitConfig::default().with_lambda(0.5);
        let est = fit_single(&Model::new(ModelKind::BinNet, 0.1), &m, &cfg).unwrap();
        assert!(est.converged);
    }
}
