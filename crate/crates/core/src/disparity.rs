//! Group disparity errors, pairwise disparity objectives and the objective vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PenaltyKind;
use crate::dataset::{GroupStats, Moments};
use crate::error::{FairGmError, Result};
use crate::linalg::{frob_dot, frob_norm_sq, l1_norm, symmetrize, Mat};
use crate::models::{Model, ModelKind};

/// Per-group solutions of the penalized problem and their raw losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolutions {
    pub thetas: Vec<Mat>,
    pub losses: Vec<f64>,
    pub converged: Vec<bool>,
}

impl LocalSolutions {
    pub fn n_groups(&self) -> usize {
        self.thetas.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub errors: Vec<f64>,
    pub pairwise: Vec<f64>,
    pub total: f64,
    pub spread: f64,
}

fn check_local(stats: &GroupStats, local: &LocalSolutions) -> Result<()> {
    if local.n_groups() < stats.n_groups() || local.losses.len() < stats.n_groups() {
        return Err(FairGmError::MissingLocalSolution(
            local.n_groups().min(local.losses.len()),
        ));
    }
    Ok(())
}

/// `E_k = L(theta; X_k) - L(theta*_k; X_k)` for every group.
pub fn disparity_errors(
    model: &Model,
    theta: &Mat,
    stats: &GroupStats,
    local: &LocalSolutions,
) -> Result<Vec<f64>> {
    check_local(stats, local)?;
    let blocks: Vec<&Moments> = stats.groups.iter().collect();
    let losses = model.losses(theta, &blocks)?;
    Ok(losses
        .iter()
        .zip(&local.losses)
        .map(|(l, l0)| l - l0)
        .collect())
}

pub fn disparity_error(
    model: &Model,
    theta: &Mat,
    k: usize,
    stats: &GroupStats,
    local: &LocalSolutions,
) -> Result<f64> {
    if k >= stats.n_groups() {
        return Err(FairGmError::MissingLocalSolution(k));
    }
    let l0 = *local
        .losses
        .get(k)
        .ok_or(FairGmError::MissingLocalSolution(k))?;
    Ok(model.loss(theta, &stats.groups[k])? - l0)
}

/// `Delta_k = sum_{s != k} phi(E_k - E_s)` for every `k`.
pub fn pairwise_from_errors(errors: &[f64], penalty: PenaltyKind) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(FairGmError::TooFewGroups);
    }
    Ok((0..errors.len())
        .map(|k| {
            (0..errors.len())
                .filter(|&s| s != k)
                .map(|s| penalty.value(errors[k] - errors[s]))
                .sum()
        })
        .collect())
}

pub fn pairwise_disparity(
    model: &Model,
    theta: &Mat,
    k: usize,
    penalty: PenaltyKind,
    stats: &GroupStats,
    local: &LocalSolutions,
) -> Result<f64> {
    let e = disparity_errors(model, theta, stats, local)?;
    pairwise_from_errors(&e, penalty)?
        .get(k)
        .copied()
        .ok_or(FairGmError::MissingLocalSolution(k))
}

pub fn report_from_errors(errors: Vec<f64>, penalty: PenaltyKind) -> Result<DisparityReport> {
    let pairwise = pairwise_from_errors(&errors, penalty)?;
    let total = pairwise.iter().sum();
    let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DisparityReport {
        errors,
        pairwise,
        total,
        spread: max - min,
    })
}

pub fn disparity_report(
    model: &Model,
    theta: &Mat,
    penalty: PenaltyKind,
    stats: &GroupStats,
    local: &LocalSolutions,
) -> Result<DisparityReport> {
    report_from_errors(disparity_errors(model, theta, stats, local)?, penalty)
}

fn pairwise_grads(errors: &[f64], grads: &[Mat], penalty: PenaltyKind) -> Result<Vec<Mat>> {
    let k_count = errors.len();
    let p = grads[0].nrows();
    let mut out = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mut g = Mat::zeros(p, p);
        for s in (0..k_count).filter(|&s| s != k) {
            let w = penalty.derivative(errors[k] - errors[s])?;
            if w != 0.0 {
                g += (&grads[k] - &grads[s]) * w;
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Gradient of `Delta_k` on the space of symmetric matrices.
pub fn disparity_grad(
    model: &Model,
    theta: &Mat,
    k: usize,
    penalty: PenaltyKind,
    stats: &GroupStats,
    local: &LocalSolutions,
) -> Result<Mat> {
    penalty.derivative(0.0)?;
    check_local(stats, local)?;
    if stats.n_groups() < 2 {
        return Err(FairGmError::TooFewGroups);
    }
    let blocks: Vec<&Moments> = stats.groups.iter().collect();
    let lg = model.losses_and_grads(theta, &blocks)?;
    let errors: Vec<f64> = lg
        .iter()
        .zip(&local.losses)
        .map(|((l, _), l0)| l - l0)
        .collect();
    let grads: Vec<Mat> = lg.into_iter().map(|(_, g)| g).collect();
    let mut all = pairwise_grads(&errors, &grads, penalty)?;
    if k >= all.len() {
        return Err(FairGmError::MissingLocalSolution(k));
    }
    Ok(all.swap_remove(k))
}

/// Objective values `F_k = f_k + lambda ||theta||_1 (+ gamma ||theta||_F^2 for k >= 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub values: Vec<f64>,
    /// Loss or disparity part `f_k`.
    pub smooth: Vec<f64>,
    /// `lambda ||theta||_1`, shared by every objective.
    pub l1: f64,
    /// Ridge part per objective (zero for the first).
    pub ridge: Vec<f64>,
}

impl ObjectiveVector {
    pub fn delta_total(&self) -> Option<f64> {
        (self.smooth.len() > 1).then(|| self.smooth[1..].iter().sum())
    }
}

/// The vector-valued problem solved by the fair estimator. Without local
/// solutions it degenerates to the single penalized pooled objective.
#[derive(Debug, Clone)]
pub struct FairProblem<'a> {
    pub model: Model,
    pub stats: &'a GroupStats,
    pub local: Option<&'a LocalSolutions>,
    pub lambda: f64,
    pub gamma: f64,
    pub penalty: PenaltyKind,
}

impl<'a> FairProblem<'a> {
    pub fn standard(model: Model, stats: &'a GroupStats, lambda: f64) -> Self {
        Self {
            model,
            stats,
            local: None,
            lambda,
            gamma: 0.0,
            penalty: PenaltyKind::Square,
        }
    }

    pub fn fair(
        model: Model,
        stats: &'a GroupStats,
        local: &'a LocalSolutions,
        lambda: f64,
        gamma: f64,
        penalty: PenaltyKind,
    ) -> Result<Self> {
        if stats.n_groups() < 2 {
            return Err(FairGmError::TooFewGroups);
        }
        check_local(stats, local)?;
        let gamma = if model.kind == ModelKind::GLasso {
            0.0
        } else {
            gamma
        };
        Ok(Self {
            model,
            stats,
            local: Some(local),
            lambda,
            gamma,
            penalty,
        })
    }

    pub fn n_objectives(&self) -> usize {
        match self.local {
            Some(_) => self.stats.n_groups() + 1,
            None => 1,
        }
    }

    pub fn penalty_value(&self, theta: &Mat) -> f64 {
        self.lambda * l1_norm(theta)
    }

    fn blocks(&self) -> Vec<&Moments> {
        let mut b = vec![&self.stats.pooled];
        if self.local.is_some() {
            b.extend(self.stats.groups.iter());
        }
        b
    }

    fn errors(&self, group_losses: &[f64]) -> Vec<f64> {
        let local = self.local.expect("fair problem");
        group_losses
            .iter()
            .zip(&local.losses)
            .map(|(l, l0)| l - l0)
            .collect()
    }

    /// Smooth parts `f_k` including the ridge term, and the raw disparity total.
    pub fn smooth_values(&self, theta: &Mat) -> Result<(Vec<f64>, Option<f64>)> {
        let losses = self.model.losses(theta, &self.blocks())?;
        let mut out = vec![losses[0]];
        if self.local.is_none() {
            return Ok((out, None));
        }
        let pairwise = pairwise_from_errors(&self.errors(&losses[1..]), self.penalty)?;
        let ridge = self.gamma * frob_norm_sq(theta);
        let total = pairwise.iter().sum();
        out.extend(pairwise.into_iter().map(|d| d + ridge));
        Ok((out, Some(total)))
    }

    pub fn smooth_values_and_grads(&self, theta: &Mat) -> Result<(Vec<f64>, Vec<Mat>)> {
        let mut lg = self.model.losses_and_grads(theta, &self.blocks())?;
        if self.local.is_none() {
            let (l, g) = lg.pop().unwrap();
            return Ok((vec![l], vec![g]));
        }
        let group: Vec<(f64, Mat)> = lg.split_off(1);
        let (l0, g0) = lg.pop().unwrap();
        let losses: Vec<f64> = group.iter().map(|(l, _)| *l).collect();
        let grads: Vec<Mat> = group.into_iter().map(|(_, g)| g).collect();
        let errors = self.errors(&losses);
        let pairwise = pairwise_from_errors(&errors, self.penalty)?;
        let pgrads = pairwise_grads(&errors, &grads, self.penalty)?;
        let ridge = self.gamma * frob_norm_sq(theta);
        let mut values = vec![l0];
        let mut out = vec![g0];
        for (d, g) in pairwise.into_iter().zip(pgrads) {
            values.push(d + ridge);
            out.push(if self.gamma > 0.0 {
                g + theta * (2.0 * self.gamma)
            } else {
                g
            });
        }
        Ok((values, out))
    }

    pub fn objective_vector(&self, theta: &Mat) -> Result<ObjectiveVector> {
        let losses = self.model.losses(theta, &self.blocks())?;
        let l1 = self.penalty_value(theta);
        let mut smooth = vec![losses[0]];
        let mut ridge = vec![0.0];
        if self.local.is_some() {
            let pairwise = pairwise_from_errors(&self.errors(&losses[1..]), self.penalty)?;
            let r = self.gamma * frob_norm_sq(theta);
            ridge.extend(std::iter::repeat_n(r, pairwise.len()));
            smooth.extend(pairwise);
        }
        let values = smooth.iter().zip(&ridge).map(|(s, r)| s + l1 + r).collect();
        Ok(ObjectiveVector {
            values,
            smooth,
            l1,
            ridge,
        })
    }
}

pub fn objective_vector(theta: &Mat, problem: &FairProblem<'_>) -> Result<ObjectiveVector> {
    problem.objective_vector(theta)
}

/// Ridge weight that makes every disparity objective convex around the probes.
///
/// The covariance graph disparities are convex quadratics, so this is zero
/// there; for BinNet the smallest Hessian eigenvalue of each `Delta_k` is
/// estimated by Lanczos iterations on finite-difference Hessian-vector
/// products, and `gamma = max(0, -lambda_min / 2)`.
pub fn choose_gamma(
    model: &Model,
    stats: &GroupStats,
    local: &LocalSolutions,
    penalty: PenaltyKind,
    probes: &[Mat],
    seed: u64,
) -> Result<f64> {
    if model.kind != ModelKind::BinNet {
        return Ok(0.0);
    }
    let problem = FairProblem::fair(*model, stats, local, 0.0, 0.0, penalty)?;
    let mut gamma = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for probe in probes {
        for k in 1..problem.n_objectives() {
            let hv = |v: &Mat| -> Result<Mat> { hessian_vector(&problem, probe, k, v) };
            let lmin = lanczos_min_eigenvalue(&hv, probe.nrows(), 40, &mut rng)?;
            gamma = gamma.max(-0.5 * lmin);
        }
    }
    Ok(gamma.max(0.0))
}

/// Central-difference Hessian-vector product of objective `k` along symmetric `v`.
pub fn hessian_vector(problem: &FairProblem<'_>, theta: &Mat, k: usize, v: &Mat) -> Result<Mat> {
    let scale = v.norm();
    if scale == 0.0 {
        return Ok(Mat::zeros(v.nrows(), v.ncols()));
    }
    let h = 1e-4 * theta.norm().max(1.0) / scale;
    let (_, gp) = problem.smooth_values_and_grads(&(theta + v * h))?;
    let (_, gm) = problem.smooth_values_and_grads(&(theta - v * h))?;
    Ok(symmetrize(&((&gp[k] - &gm[k]) / (2.0 * h))))
}

fn lanczos_min_eigenvalue(
    op: &dyn Fn(&Mat) -> Result<Mat>,
    p: usize,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let dim = p * (p + 1) / 2;
    let steps = max_steps.min(dim);
    let mut q = symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0)));
    q /= q.norm();
    let mut basis: Vec<Mat> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    for j in 0..steps {
        let mut w = op(&q)?;
        let a = frob_dot(&w, &q);
        w -= &q * a;
        if j > 0 {
            w -= &basis[j - 1] * beta[j - 1];
        }
        basis.push(q.clone());
        for b in &basis {
            let c = frob_dot(&w, b);
            w -= b * c;
        }
        alpha.push(a);
        let nb = w.norm();
        if j + 1 == steps || nb < 1e-12 * (1.0 + a.abs()) {
            break;
        }
        beta.push(nb);
        q = w / nb;
    }
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    Ok(crate::linalg::min_eigenvalue(&t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tests::{fd_sym_grad, random_binary, random_spd, random_sym, rel_err};
    use crate::models::Model;

    fn gaussian_stats(rng: &mut ChaCha8Rng, sizes: &[usize]) -> GroupStats {
        use rand_distr::{Distribution, StandardNormal};
        let blocks: Vec<Mat> = sizes
            .iter()
            .map(|&n| Mat::from_fn(n, 4, |_, _| StandardNormal.sample(rng)))
            .collect();
        crate::dataset::group_stats(&crate::dataset::GroupedDataset::from_groups(&blocks).unwrap())
    }

    fn fake_locals(model: &Model, stats: &GroupStats, rng: &mut ChaCha8Rng) -> LocalSolutions {
        let thetas: Vec<Mat> = stats.groups.iter().map(|_| random_spd(4, rng)).collect();
        let losses = thetas
            .iter()
            .zip(&stats.groups)
            .map(|(t, g)| model.loss(t, g).unwrap())
            .collect();
        LocalSolutions {
            converged: vec![true; thetas.len()],
            thetas,
            losses,
        }
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(
            pairwise_from_errors(&[0.3, 0.3], PenaltyKind::Square).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            pairwise_from_errors(&[0.3, 0.3], PenaltyKind::Exp).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(
            pairwise_from_errors(&[1.0, 0.0, 0.0], PenaltyKind::Square).unwrap()[0],
            1.0
        );
        assert_eq!(
            pairwise_from_errors(&[1.0], PenaltyKind::Square),
            Err(FairGmError::TooFewGroups)
        );
    }

    #[test]
    fn error_vanishes_at_local_solution_and_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let stats = gaussian_stats(&mut rng, &[30, 40, 20]);
        let model = Model::new(ModelKind::GLasso, 0.1);
        let local = fake_locals(&model, &stats, &mut rng);
        for k in 0..3 {
            let e = disparity_error(&model, &local.thetas[k], k, &stats, &local).unwrap();
            assert!(e.abs() < 1e-12);
        }
        let theta = random_spd(4, &mut rng);
        let errs = disparity_errors(&model, &theta, &stats, &local).unwrap();
        for k in 0..3 {
            let direct = crate::models::glasso_loss(&theta, &stats.groups[k].cov).unwrap()
                - crate::models::glasso_loss(&local.thetas[k], &stats.groups[k].cov).unwrap();
            assert!((errs[k] - direct).abs() < 1e-12);
        }
        let short = LocalSolutions {
            thetas: vec![],
            losses: vec![],
            converged: vec![],
        };
        assert!(matches!(
            disparity_errors(&model, &theta, &stats, &short),
            Err(FairGmError::MissingLocalSolution(_))
        ));
    }

    #[test]
    fn identical_groups_have_equal_errors_and_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Mat::from_fn(25, 4, |_, _| rng.random_range(-1.0..1.0));
        let ds = crate::dataset::GroupedDataset::from_groups(&[x.clone(), x]).unwrap();
        let stats = crate::dataset::group_stats(&ds);
        let model = Model::new(ModelKind::GLasso, 0.1);
        let theta0 = random_spd(4, &mut rng);
        let l0 = model.loss(&theta0, &stats.groups[0]).unwrap();
        let local = LocalSolutions {
            thetas: vec![theta0.clone(), theta0],
            losses: vec![l0, l0],
            converged: vec![true; 2],
        };
        let theta = random_spd(4, &mut rng);
        let e = disparity_errors(&model, &theta, &stats, &local).unwrap();
        assert!((e[0] - e[1]).abs() < 1e-12);
        let g = disparity_grad(&model, &theta, 0, PenaltyKind::Square, &stats, &local).unwrap();
        assert!(g.amax() < 1e-12);
        let problem =
            FairProblem::fair(model, &stats, &local, 0.05, 0.0, PenaltyKind::Square).unwrap();
        let ov = problem.objective_vector(&theta).unwrap();
        assert!((ov.values[1] - ov.values[2]).abs() < 1e-12);
        assert!((ov.values[1] - 0.05 * l1_norm(&theta)).abs() < 1e-12);
    }

    #[test]
    fn abs_penalty_has_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let stats = gaussian_stats(&mut rng, &[10, 10]);
        let model = Model::new(ModelKind::GLasso, 0.1);
        let local = fake_locals(&model, &stats, &mut rng);
        let r = disparity_grad(
            &model,
            &Mat::identity(4, 4),
            0,
            PenaltyKind::Abs,
            &stats,
            &local,
        );
        assert_eq!(
            r.err(),
            Some(FairGmError::UnsupportedPenaltyGradient(PenaltyKind::Abs))
        );
    }

    #[test]
    fn report_totals_and_fairness_certificate() {
        let r = report_from_errors(vec![0.2, 0.2, 0.2], PenaltyKind::Square).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.spread, 0.0);
        let r = report_from_errors(vec![0.5, -0.1, 0.3], PenaltyKind::Square).unwrap();
        assert!((r.total - r.pairwise.iter().sum::<f64>()).abs() < 1e-12);
        assert!(r.spread > 0.0 && r.total > 0.0);
    }

    #[test]
    fn glasso_error_differences_are_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let stats = gaussian_stats(&mut rng, &[30, 50]);
        let model = Model::new(ModelKind::GLasso, 0.1);
        let local = fake_locals(&model, &stats, &mut rng);
        let theta = random_spd(4, &mut rng);
        let dir = random_sym(4, 0.1, &mut rng);
        let diff = |t: f64| {
            let e = disparity_errors(&model, &(&theta + &dir * t), &stats, &local).unwrap();
            e[0] - e[1]
        };
        let (a, b, c) = (diff(0.0), diff(0.5), diff(1.0));
        assert!((b - 0.5 * (a + c)).abs() < 1e-10);
    }

    fn check_fd_all(kind: ModelKind, penalty: PenaltyKind, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = if kind == ModelKind::BinNet {
            let blocks = vec![
                random_binary(15, 4, &mut rng),
                random_binary(25, 4, &mut rng),
            ];
            crate::dataset::group_stats(
                &crate::dataset::GroupedDataset::from_groups(&blocks).unwrap(),
            )
        } else {
            gaussian_stats(&mut rng, &[15, 25])
        };
        let model = Model::new(kind, 0.2);
        let local = fake_locals(&model, &stats, &mut rng);
        let problem = FairProblem::fair(model, &stats, &local, 0.1, 0.3, penalty).unwrap();
        let theta = if kind == ModelKind::BinNet {
            random_sym(4, 0.3, &mut rng)
        } else {
            random_spd(4, &mut rng)
        };
        let (_, grads) = problem.smooth_values_and_grads(&theta).unwrap();
        for k in 0..problem.n_objectives() {
            let f = |t: &Mat| problem.smooth_values(t).unwrap().0[k];
            let fd = fd_sym_grad(&f, &theta, 1e-5);
            assert!(
                rel_err(&grads[k], &fd) < 1e-4,
                "{kind:?} {penalty:?} k={k}: {}",
                rel_err(&grads[k], &fd)
            );
        }
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        for (i, kind) in [ModelKind::GLasso, ModelKind::CovGraph, ModelKind::BinNet]
            .into_iter()
            .enumerate()
        {
            for penalty in [PenaltyKind::Square, PenaltyKind::Exp] {
                check_fd_all(kind, penalty, 20 + i as u64);
            }
        }
    }

    #[test]
    fn objective_vector_components_recombine() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let stats = gaussian_stats(&mut rng, &[20, 20, 30]);
        let model = Model::new(ModelKind::CovGraph, 0.1);
        let local = fake_locals(&model, &stats, &mut rng);
        let problem =
            FairProblem::fair(model, &stats, &local, 0.1, 0.25, PenaltyKind::Square).unwrap();
        let theta = random_spd(4, &mut rng);
        let ov = problem.objective_vector(&theta).unwrap();
        assert_eq!(ov.values.len(), 4);
        let pooled = crate::models::covgraph_loss(&theta, &stats.pooled.cov, 0.1).unwrap();
        assert!((ov.values[0] - (pooled + 0.1 * l1_norm(&theta))).abs() < 1e-12);
        let rep = disparity_report(&model, &theta, PenaltyKind::Square, &stats, &local).unwrap();
        for k in 0..3 {
            let expect = rep.pairwise[k] + 0.1 * l1_norm(&theta) + 0.25 * theta.norm_squared();
            assert!((ov.values[k + 1] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
        let single = FairProblem::standard(model, &stats, 0.1)
            .objective_vector(&theta)
            .unwrap();
        assert_eq!(single.values.len(), 1);
        assert!((single.values[0] - ov.values[0]).abs() < 1e-14);
    }

    #[test]
    fn gamma_is_zero_for_covgraph_and_identical_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let stats = gaussian_stats(&mut rng, &[10, 10]);
        let model = Model::new(ModelKind::CovGraph, 0.1);
        let local = fake_locals(&model, &stats, &mut rng);
        assert_eq!(
            choose_gamma(
                &model,
                &stats,
                &local,
                PenaltyKind::Square,
                &[Mat::identity(4, 4)],
                0
            )
            .unwrap(),
            0.0
        );

        let x = random_binary(30, 4, &mut rng);
        let stats = crate::dataset::group_stats(
            &crate::dataset::GroupedDataset::from_groups(&[x.clone(), x]).unwrap(),
        );
        let model = Model::new(ModelKind::BinNet, 0.1);
        let t = random_sym(4, 0.2, &mut rng);
        let l = model.loss(&t, &stats.groups[0]).unwrap();
        let local = LocalSolutions {
            thetas: vec![t.clone(), t.clone()],
            losses: vec![l, l],
            converged: vec![true; 2],
        };
        let g = choose_gamma(
            &model,
            &stats,
            &local,
            PenaltyKind::Square,
            &[t, Mat::zeros(4, 4)],
            1,
        )
        .unwrap();
        assert!(g.abs() < 1e-6, "{g}");
    }

    /// Dense Hessian by finite differencing the gradient along an orthonormal
    /// basis of symmetric matrices.
    fn dense_hessian_min_eig(problem: &FairProblem<'_>, theta: &Mat, k: usize) -> f64 {
        let p = theta.nrows();
        let mut basis = Vec::new();
        for a in 0..p {
            for b in a..p {
                let mut e = Mat::zeros(p, p);
                if a == b {
                    e[(a, a)] = 1.0;
                } else {
                    e[(a, b)] = std::f64::consts::FRAC_1_SQRT_2;
                    e[(b, a)] = std::f64::consts::FRAC_1_SQRT_2;
                }
                basis.push(e);
            }
        }
        let h = 1e-5;
        let d = basis.len();
        let mut hess = Mat::zeros(d, d);
        for (j, e) in basis.iter().enumerate() {
            let gp = problem.smooth_values_and_grads(&(theta + e * h)).unwrap().1;
            let gm = problem.smooth_values_and_grads(&(theta - e * h)).unwrap().1;
            let col = (&gp[k] - &gm[k]) / (2.0 * h);
            for (i, b) in basis.iter().enumerate() {
                hess[(i, j)] = frob_dot(&col, b);
            }
        }
        crate::linalg::min_eigenvalue(&hess)
    }

    #[test]
    fn binnet_gamma_matches_dense_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let blocks = vec![
            random_binary(40, 3, &mut rng),
            random_binary(60, 3, &mut rng),
        ];
        let stats = crate::dataset::group_stats(
            &crate::dataset::GroupedDataset::from_groups(&blocks).unwrap(),
        );
        let model = Model::new(ModelKind::BinNet, 0.1);
        let thetas = vec![random_sym(3, 1.0, &mut rng), random_sym(3, 1.0, &mut rng)];
        let losses = thetas
            .iter()
            .zip(&stats.groups)
            .map(|(t, g)| model.loss(t, g).unwrap() - 5.0)
            .collect();
        let local = LocalSolutions {
            thetas,
            losses,
            converged: vec![true; 2],
        };
        let probe = random_sym(3, 1.5, &mut rng);
        let problem =
            FairProblem::fair(model, &stats, &local, 0.0, 0.0, PenaltyKind::Square).unwrap();
        let oracle = (1..3)
            .map(|k| dense_hessian_min_eig(&problem, &probe, k))
            .fold(f64::INFINITY, f64::min);
        let expected = (-0.5 * oracle).max(0.0);
        let g = choose_gamma(&model, &stats, &local, PenaltyKind::Square, &[probe], 3).unwrap();
        assert!(expected > 0.0, "instance should be nonconvex");
        assert!((g - expected).abs() <= 0.1 * expected, "{g} vs {expected}");
    }
}
