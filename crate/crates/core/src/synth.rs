//! Synthetic ground truths and samplers.
//!
//! Every generator draws from ChaCha20 seeded with `seed`. Ground-truth
//! construction uses stream 0 and the sample of group `k` (zero-based) uses
//! stream `k + 1`, so each group's sample is independent of how many other
//! groups are drawn.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FairGmError, Result};
use crate::linalg::{min_eigenvalue, symmetrize, Mat};

/// RNG for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    /// Covariance matrices `Sigma_k`.
    Covariance,
    /// Ising interaction matrices `Theta_k`.
    Ising,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub kind: TruthKind,
    pub matrices: Vec<Mat>,
    pub p: usize,
    /// Number of diagonal blocks or hub nodes.
    pub structure: usize,
    pub seed: u64,
    /// Block indices reset to the identity, or hub nodes removed, per group.
    pub altered: Vec<Vec<usize>>,
}

pub const EIGEN_FLOOR: f64 = 1e-5;

/// Preconditions of [`gen_block_covariances`].
pub fn check_block_params(p: usize, q: usize, k: usize, resets: usize) -> Result<()> {
    if q == 0 || p == 0 || !p.is_multiple_of(q) {
        return Err(FairGmError::InvalidGenerator(format!(
            "{q} blocks do not divide P = {p}"
        )));
    }
    if k == 0 {
        return Err(FairGmError::InvalidGenerator(
            "need at least one group".into(),
        ));
    }
    if resets * (k - 1) > q {
        return Err(FairGmError::InvalidGenerator(format!(
            "{k} groups with {resets} resets each need more than {q} blocks"
        )));
    }
    Ok(())
}

/// Block-diagonal covariances. The first has `q` random blocks; each later
/// group copies its predecessor and resets `resets` further blocks (lowest
/// index first) to the identity.
pub fn gen_block_covariances(
    p: usize,
    q: usize,
    k: usize,
    resets: usize,
    seed: u64,
) -> Result<GroundTruth> {
    check_block_params(p, q, k, resets)?;
    let b = p / q;
    let mut rng = stream_rng(seed, 0);
    let normal = Normal::new(0.7, 0.2).expect("valid normal");
    let mut sigma = Mat::zeros(p, p);
    for blk in 0..q {
        let raw = Mat::from_fn(b, b, |_, _| normal.sample(&mut rng));
        let eig = SymmetricEigen::new(symmetrize(&raw));
        let clamped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
        let block = symmetrize(
            &(&eig.eigenvectors * Mat::from_diagonal(&clamped) * eig.eigenvectors.transpose()),
        );
        sigma.view_mut((blk * b, blk * b), (b, b)).copy_from(&block);
    }
    let mut matrices = vec![sigma];
    let mut altered = vec![Vec::new()];
    let mut next = 0;
    for _ in 1..k {
        let mut s = matrices.last().unwrap().clone();
        let mut changed = altered.last().unwrap().clone();
        for _ in 0..resets {
            s.view_mut((next * b, next * b), (b, b))
                .copy_from(&Mat::identity(b, b));
            changed.push(next);
            next += 1;
        }
        matrices.push(s);
        altered.push(changed);
    }
    Ok(GroundTruth {
        kind: TruthKind::Covariance,
        matrices,
        p,
        structure: q,
        seed,
        altered,
    })
}

/// Hub networks. The first has `hubs` hub nodes; each later group removes two
/// more hubs by zeroing their off-diagonal rows and columns.
pub fn gen_hub_networks(p: usize, hubs: usize, k: usize, seed: u64) -> Result<GroundTruth> {
    gen_hub_networks_with(p, hubs, k, 2, seed)
}

/// Preconditions of [`gen_hub_networks_with`].
pub fn check_hub_params(p: usize, hubs: usize, k: usize, removals: usize) -> Result<()> {
    if p < 4 || hubs == 0 || hubs > p || k == 0 || removals * (k - 1) > hubs {
        return Err(FairGmError::InvalidGenerator(format!(
            "P = {p}, {hubs} hubs and {k} groups removing {removals} hubs each is infeasible"
        )));
    }
    Ok(())
}

pub fn gen_hub_networks_with(
    p: usize,
    hubs: usize,
    k: usize,
    removals: usize,
    seed: u64,
) -> Result<GroundTruth> {
    check_hub_params(p, hubs, k, removals)?;
    let mut rng = stream_rng(seed, 0);
    let mut adj = vec![vec![false; p]; p];
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random_bool(0.01) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    let hub_nodes: Vec<usize> = rand::seq::index::sample(&mut rng, p, hubs)
        .into_iter()
        .collect();
    let mut is_hub = vec![false; p];
    for &h in &hub_nodes {
        is_hub[h] = true;
        for j in 0..p {
            if j != h {
                let on = rng.random_bool(0.99);
                adj[h][j] = on;
                adj[j][h] = on;
            }
        }
    }
    let mut e = Mat::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if adj[i][j] {
                let hi = if is_hub[i] || is_hub[j] { 0.75 } else { 0.5 };
                let mag = rng.random_range(0.25..hi);
                e[(i, j)] = if rng.random_bool(0.5) { mag } else { -mag };
            }
        }
    }
    let e = symmetrize(&e);
    let shift = 0.1 - min_eigenvalue(&e);
    let theta1 = &e + Mat::identity(p, p) * shift;

    let mut matrices = vec![theta1];
    let mut altered = vec![Vec::new()];
    let mut next = 0;
    for _ in 1..k {
        let mut t = matrices.last().unwrap().clone();
        let mut removed = altered.last().unwrap().clone();
        for _ in 0..removals {
            let h = hub_nodes[next];
            next += 1;
            for j in 0..p {
                if j != h {
                    t[(h, j)] = 0.0;
                    t[(j, h)] = 0.0;
                }
            }
            removed.push(h);
        }
        matrices.push(t);
        altered.push(removed);
    }
    Ok(GroundTruth {
        kind: TruthKind::Ising,
        matrices,
        p,
        structure: hubs,
        seed,
        altered,
    })
}

/// `n` draws from `N(0, sigma)`.
pub fn sample_mvn(sigma: &Mat, n: usize, seed: u64, stream: u64) -> Result<Mat> {
    let chol =
        nalgebra::Cholesky::new(symmetrize(sigma)).ok_or(FairGmError::NotPositiveDefinite)?;
    let l = chol.l();
    let mut rng = stream_rng(seed, stream);
    let z = Mat::from_fn(sigma.nrows(), n, |_, _| StandardNormal.sample(&mut rng));
    Ok((l * z).transpose())
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Systematic-scan Gibbs sampler for the Ising model, starting from all zeros.
pub fn gibbs_sample_ising(
    theta: &Mat,
    n: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
    stream: u64,
) -> Result<Mat> {
    if thinning == 0 {
        return Err(FairGmError::InvalidGenerator(
            "thinning must be at least 1".into(),
        ));
    }
    let p = theta.nrows();
    let mut rng = stream_rng(seed, stream);
    let mut x = vec![0.0f64; p];
    let mut out = Mat::zeros(n, p);
    let sweep = |x: &mut Vec<f64>, rng: &mut ChaCha20Rng| {
        for j in 0..p {
            let mut u = theta[(j, j)];
            for (jj, xv) in x.iter().enumerate() {
                if jj != j {
                    u += theta[(j, jj)] * xv;
                }
            }
            x[j] = if rng.random::<f64>() < sigmoid(u) {
                1.0
            } else {
                0.0
            };
        }
    };
    for _ in 0..burn_in {
        sweep(&mut x, &mut rng);
    }
    for i in 0..n {
        for _ in 0..thinning {
            sweep(&mut x, &mut rng);
        }
        for j in 0..p {
            out[(i, j)] = x[j];
        }
    }
    Ok(out)
}

pub const DEFAULT_BURN_IN: usize = 10_000;
pub const DEFAULT_THINNING: usize = 100;

/// Probabilities of all `2^P` binary vectors; outcome `i` has `x_j = (i >> j) & 1`.
pub fn exact_ising_distribution(theta: &Mat) -> Result<Vec<f64>> {
    let p = theta.nrows();
    if p > 12 {
        return Err(FairGmError::InvalidGenerator(format!(
            "exact enumeration needs P <= 12, got {p}"
        )));
    }
    let log_weights: Vec<f64> = (0..1usize << p)
        .map(|i| {
            let x: Vec<f64> = (0..p).map(|j| ((i >> j) & 1) as f64).collect();
            let mut s = 0.0;
            for j in 0..p {
                s += theta[(j, j)] * x[j];
                for jj in (j + 1)..p {
                    s += theta[(j, jj)] * x[j] * x[jj];
                }
            }
            s
        })
        .collect();
    let mx = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// Empirical frequencies of the `2^P` outcomes, indexed as in [`exact_ising_distribution`].
pub fn empirical_distribution(samples: &Mat) -> Vec<f64> {
    let p = samples.ncols();
    let mut counts = vec![0.0; 1 << p];
    for i in 0..samples.nrows() {
        let idx = (0..p).fold(0usize, |acc, j| acc | ((samples[(i, j)] as usize) << j));
        counts[idx] += 1.0;
    }
    let n = samples.nrows().max(1) as f64;
    counts.into_iter().map(|c| c / n).collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
