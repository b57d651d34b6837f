//! Multi-objective proximal gradient method for the fair estimator.

use nalgebra::SymmetricEigen;

use crate::config::FitConfig;
use crate::dataset::{group_stats, GroupStats, GroupedDataset};
use crate::disparity::{
    choose_gamma, disparity_report, pairwise_from_errors, DisparityReport, FairProblem,
    LocalSolutions,
};
use crate::error::{FairGmError, Result};
use crate::estimate::{GraphEstimate, TraceRecord};
use crate::ista::{fit_locals, fit_single, roundoff, soft_threshold, unresolvable};
use crate::linalg::{frob_dot, is_pd, l1_norm, Mat};
use crate::models::{Model, ModelKind};

/// Euclidean projection onto the probability simplex (Michelot's algorithm).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut active: Vec<usize> = (0..y.len()).collect();
    loop {
        let tau = (active.iter().map(|&i| y[i]).sum::<f64>() - 1.0) / active.len() as f64;
        let before = active.len();
        active.retain(|&i| y[i] > tau);
        if active.len() == before {
            let mut x = vec![0.0; y.len()];
            for &i in &active {
                x[i] = y[i] - tau;
            }
            return x;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub phi_next: Mat,
    pub rho: Vec<f64>,
    /// Dual value at `rho`.
    pub omega: f64,
    /// Primal value `max_k psi_k(phi_next)` of the recovered point.
    pub varphi: f64,
    /// Linearized change `<grad f_k, d> + g(phi) - g(theta) + ell/2 ||d||^2` per objective.
    pub psi: Vec<f64>,
    pub iterations: usize,
}

impl SubproblemSolution {
    pub fn gap(&self) -> f64 {
        self.varphi - self.omega
    }
}

struct DualPoint {
    phi: Mat,
    psi: Vec<f64>,
    omega: f64,
    primal: f64,
    /// Curvature of the dual along the simplex, `-(1/ell) G_A^T G_A` over active entries.
    hessian: Mat,
}

fn dual_point(
    theta: &Mat,
    grads: &[Mat],
    rho: &[f64],
    ell: f64,
    lambda: f64,
    g_theta: f64,
) -> DualPoint {
    let m = grads.len();
    let mut comb = &grads[0] * rho[0];
    for (g, r) in grads.iter().zip(rho).skip(1) {
        if *r != 0.0 {
            comb += g * *r;
        }
    }
    let phi = soft_threshold(&(theta - comb / ell), lambda / ell);
    let d = &phi - theta;
    let base = lambda * l1_norm(&phi) - g_theta + 0.5 * ell * d.norm_squared();
    let psi: Vec<f64> = grads.iter().map(|g| frob_dot(g, &d) + base).collect();
    let omega = psi.iter().zip(rho).map(|(p, r)| p * r).sum();
    let primal = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut hessian = Mat::zeros(m, m);
    if m > 1 {
        let masked: Vec<Mat> = grads
            .iter()
            .map(|g| g.zip_map(&phi, |gv, p| if p != 0.0 { gv } else { 0.0 }))
            .collect();
        for i in 0..m {
            for j in i..m {
                let h = -frob_dot(&masked[i], &grads[j]) / ell;
                hessian[(i, j)] = h;
                hessian[(j, i)] = h;
            }
        }
    }
    DualPoint {
        phi,
        psi,
        omega,
        primal,
        hessian,
    }
}

/// Maximizes the local quadratic model `psi.(z - x) + 1/2 (z - x)' H (z - x)` over the simplex.
fn newton_target(x: &[f64], psi: &[f64], hessian: &Mat) -> Vec<f64> {
    let m = x.len();
    let curvature = SymmetricEigen::new(-hessian.clone()).eigenvalues.max();
    let scale = psi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(curvature > 1e-14 * scale.max(1e-300)) {
        // Flat model: the best vertex.
        let best = (0..m).fold(0, |b, i| if psi[i] > psi[b] { i } else { b });
        let mut z = vec![0.0; m];
        z[best] = 1.0;
        return z;
    }
    let step = 1.0 / curvature;
    let grad_at = |z: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| psi[i] + (0..m).map(|j| hessian[(i, j)] * (z[j] - x[j])).sum::<f64>())
            .collect()
    };
    let mut z = x.to_vec();
    let mut y = z.clone();
    let mut t = 1.0f64;
    for _ in 0..300 {
        let g = grad_at(&y);
        let zn = project_simplex(
            &y.iter()
                .zip(&g)
                .map(|(a, b)| a + step * b)
                .collect::<Vec<_>>(),
        );
        let moved = zn
            .iter()
            .zip(&z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / tn;
        y = zn.iter().zip(&z).map(|(a, b)| a + beta * (a - b)).collect();
        z = zn;
        t = tn;
        if moved <= 1e-13 {
            break;
        }
    }
    z
}

/// Minimizes `max_k <grad f_k, phi - theta> + g(phi) - g(theta) + ell/2 ||phi - theta||^2`
/// through its dual over the simplex. The dual is a concave piecewise quadratic in `rho`,
/// maximized by projected Newton steps with a backtracking safeguard.
pub fn solve_subproblem(
    theta: &Mat,
    grads: &[Mat],
    ell: f64,
    lambda: f64,
    warm: Option<&[f64]>,
    max_iter: usize,
    tol: f64,
) -> Result<SubproblemSolution> {
    let m = grads.len();
    if m == 0 {
        return Err(FairGmError::Shape("no objectives".into()));
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(FairGmError::NonFinite("objective gradients"));
    }
    let g_theta = lambda * l1_norm(theta);
    let finish = |rho: Vec<f64>, pt: DualPoint, iterations| SubproblemSolution {
        phi_next: pt.phi,
        rho,
        omega: pt.omega,
        varphi: pt.primal,
        psi: pt.psi,
        iterations,
    };
    if m == 1 {
        let rho = vec![1.0];
        let pt = dual_point(theta, grads, &rho, ell, lambda, g_theta);
        return Ok(finish(rho, pt, 0));
    }

    let mut x = match warm {
        Some(w) if w.len() == m => project_simplex(w),
        _ => {
            let mut e = vec![0.0; m];
            e[0] = 1.0;
            e
        }
    };
    let mut px = dual_point(theta, grads, &x, ell, lambda, g_theta);
    let done = |p: &DualPoint| p.primal - p.omega <= tol * p.omega.abs() + 1e-300;
    let mut iters = 0;
    while iters < max_iter && !done(&px) {
        iters += 1;
        let z = newton_target(&x, &px.psi, &px.hessian);
        let dir: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let cand = project_simplex(&cand);
            let pc = dual_point(theta, grads, &cand, ell, lambda, g_theta);
            if pc.omega > px.omega || (pc.omega == px.omega && pc.primal < px.primal) {
                accepted = Some((cand, pc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, pc)) => {
                x = cand;
                px = pc;
            }
            None => break,
        }
    }
    Ok(finish(x, px, iters))
}

/// `omega_ell(theta)`: the optimal subproblem value, zero exactly at Pareto stationary points.
pub fn pareto_residual(
    problem: &FairProblem<'_>,
    theta: &Mat,
    ell: f64,
    config: &FitConfig,
) -> Result<f64> {
    let (_, grads) = problem.smooth_values_and_grads(theta)?;
    let sol = solve_subproblem(
        theta,
        &grads,
        ell,
        problem.lambda,
        None,
        config.dual_max_iter.max(2000),
        1e-12,
    )?;
    Ok(sol.varphi)
}

/// Runs the multi-objective proximal gradient method from `init`.
pub fn solve_pareto(
    problem: &FairProblem<'_>,
    init: Mat,
    config: &FitConfig,
) -> Result<GraphEstimate> {
    config.validate()?;
    crate::linalg::check_square(&init, problem.stats.dim(), "initial point")?;
    let lambda = problem.lambda;
    let m = problem.n_objectives();
    let mut theta = init;
    let (mut f, mut grads) = problem.smooth_values_and_grads(&theta)?;
    let objective = |f: &[f64], theta: &Mat| -> Vec<f64> {
        let g = lambda * l1_norm(theta);
        f.iter().map(|v| v + g).collect()
    };
    let delta = |f: &[f64], theta: &Mat| -> Result<Option<f64>> {
        if m == 1 {
            return Ok(None);
        }
        let ridge = problem.gamma * theta.norm_squared();
        Ok(Some(f[1..].iter().map(|v| v - ridge).sum()))
    };
    let mut trace = vec![TraceRecord::initial(
        objective(&f, &theta),
        delta(&f, &theta)?,
    )];
    let mut rho: Vec<f64> = (0..m).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let mut previous_ell = None;
    let mut ell = config.ell0;
    let mut infeasible_trials = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut iter = 0;

    while iter < config.max_iter {
        ell = config.start_ell(previous_ell);
        let mut rejected = 0;
        let step = loop {
            if ell > config.ell_max {
                return Err(FairGmError::LineSearchFailed(ell));
            }
            let sol = solve_subproblem(
                &theta,
                &grads,
                ell,
                lambda,
                Some(&rho),
                config.dual_max_iter,
                config.dual_tol,
            )?;
            match problem.smooth_values(&sol.phi_next) {
                Err(FairGmError::NotPositiveDefinite) => infeasible_trials += 1,
                Err(e) => return Err(e),
                Ok((fc, _)) => {
                    let d = &sol.phi_next - &theta;
                    let half = 0.5 * ell * d.norm_squared();
                    let ok = (0..m).all(|k| {
                        let bound = f[k] + frob_dot(&grads[k], &d) + half;
                        fc[k] <= bound + roundoff(fc[k], bound)
                    });
                    if ok {
                        break (sol, fc, false);
                    }
                    let g_old = lambda * l1_norm(&theta);
                    let g_new = lambda * l1_norm(&sol.phi_next);
                    let flat = (0..m).all(|k| {
                        unresolvable(
                            f[k] + g_old,
                            fc[k] + g_new,
                            frob_dot(&grads[k], &d) + g_new - g_old,
                        )
                    });
                    if flat {
                        break (sol, fc, true);
                    }
                }
            }
            rejected += 1;
            ell *= config.ell_growth;
        };
        let (sol, f_new, flat) = step;
        iter += 1;
        previous_ell = Some(ell);
        let d = &sol.phi_next - &theta;
        let step_norm = d.norm();
        let fixed_point = d.iter().all(|&v| v == 0.0);
        let theta_norm = theta.norm();
        theta = sol.phi_next;
        rho = sol.rho.clone();
        let (_, g_new) = problem.smooth_values_and_grads(&theta)?;
        f = f_new;
        grads = g_new;
        trace.push(TraceRecord {
            iter,
            objectives: objective(&f, &theta),
            delta_total: delta(&f, &theta)?,
            rho: sol.rho,
            ell,
            residual: sol.varphi,
            step_norm,
            rejected,
        });
        let stop = if m == 1 {
            match config.ista_stop {
                crate::config::IstaStop::GradientMap => ell * l1_norm(&d) <= config.eps,
                crate::config::IstaStop::RawGradient => l1_norm(&grads[0]) <= config.eps,
            }
        } else {
            sol.varphi.abs() <= config.eps || step_norm <= config.eps * (1.0 + theta_norm)
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
        is_pd: is_pd(&theta),
        matrix: theta,
        model: problem.model.kind,
        converged,
        stalled,
        iterations: iter,
        final_ell: ell,
        infeasible_trials,
        trace,
    })
}

/// Everything produced by a fair fit.
#[derive(Debug, Clone)]
pub struct FairFit {
    pub estimate: GraphEstimate,
    pub report: DisparityReport,
    pub local: LocalSolutions,
    pub gamma: f64,
    /// Group whose local solution started the iteration.
    pub init_group: usize,
}

/// Index `k` maximizing `Delta_k` at the group's own local solution; ties go to the lowest index.
pub fn initial_group(
    model: &Model,
    stats: &GroupStats,
    local: &LocalSolutions,
    config: &FitConfig,
) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..stats.n_groups() {
        let errors = crate::disparity::disparity_errors(model, &local.thetas[k], stats, local)?;
        let dk = pairwise_from_errors(&errors, config.penalty)?[k];
        if dk > best.1 {
            best = (k, dk);
        }
    }
    Ok(best.0)
}

pub fn fit_fair(model: &Model, ds: &GroupedDataset, config: &FitConfig) -> Result<FairFit> {
    if model.kind == ModelKind::BinNet {
        ds.require_binary()?;
    }
    fit_fair_stats(model, &group_stats(ds), config)
}

pub fn fit_fair_stats(model: &Model, stats: &GroupStats, config: &FitConfig) -> Result<FairFit> {
    config.validate()?;
    let local = fit_locals(model, stats, config)?;
    fit_fair_with_locals(model, stats, local, config)
}

pub fn fit_fair_with_locals(
    model: &Model,
    stats: &GroupStats,
    local: LocalSolutions,
    config: &FitConfig,
) -> Result<FairFit> {
    config.validate()?;
    if stats.n_groups() < 2 {
        let estimate = fit_single(model, &stats.pooled, config)?;
        let report = DisparityReport {
            errors: vec![0.0],
            pairwise: vec![0.0],
            total: 0.0,
            spread: 0.0,
        };
        return Ok(FairFit {
            estimate,
            report,
            local,
            gamma: 0.0,
            init_group: 0,
        });
    }
    config.penalty.derivative(0.0)?;
    let init_group = initial_group(model, stats, &local, config)?;
    let init = local.thetas[init_group].clone();
    let gamma = match (model.kind, config.gamma) {
        (ModelKind::GLasso, _) => 0.0,
        (_, Some(g)) => g,
        (_, None) => {
            let mut probes = vec![init.clone()];
            probes.extend(local.thetas.iter().cloned());
            choose_gamma(model, stats, &local, config.penalty, &probes, config.seed)?
        }
    };
    let problem = FairProblem::fair(*model, stats, &local, config.lambda, gamma, config.penalty)?;
    let estimate = solve_pareto(&problem, init, config)?;
    let report = disparity_report(model, &estimate.matrix, config.penalty, stats, &local)?;
    Ok(FairFit {
        estimate,
        report,
        local,
        gamma,
        init_group,
    })
}
