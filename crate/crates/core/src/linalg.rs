//! Small dense linear algebra helpers shared by the models and solvers.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{FairGmError, Result};

pub type Mat = DMatrix<f64>;

/// Cholesky factor of a symmetric positive definite matrix.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &Mat) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(FairGmError::NonFinite("matrix factorization"));
        }
        let chol = Cholesky::new(m.clone()).ok_or(FairGmError::NotPositiveDefinite)?;
        let l = chol.l_dirty();
        if (0..m.nrows()).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
            return Err(FairGmError::NotPositiveDefinite);
        }
        Ok(Self { chol })
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> Mat {
        // inv(L L') = inv(L)' inv(L); the product goes through the blocked gemm kernel.
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let mut linv = Mat::zeros(n, n);
        let ls = l.as_slice();
        for j in 0..n {
            let x = &mut linv.as_mut_slice()[j * n..(j + 1) * n];
            x[j] = 1.0;
            // Column-oriented forward substitution; the zeros above row j are never touched.
            for k in j..n {
                let xk = x[k] / ls[k * n + k];
                x[k] = xk;
                if xk != 0.0 {
                    for (xi, li) in x[k + 1..].iter_mut().zip(&ls[k * n + k + 1..(k + 1) * n]) {
                        *xi -= xk * li;
                    }
                }
            }
        }
        symmetrize(&(linv.transpose() * &linv))
    }
}

pub fn is_pd(m: &Mat) -> bool {
    SpdFactor::new(m).is_ok()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &Mat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn frob_dot(a: &Mat, b: &Mat) -> f64 {
    let (a, b) = (a.as_slice(), b.as_slice());
    let mut acc = [0.0f64; 4];
    let split = a.len() / 4 * 4;
    for (x, y) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = a[split..].iter().zip(&b[split..]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + c
}

pub fn l1_norm(m: &Mat) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

pub fn frob_norm_sq(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(f64::NAN)
}

pub fn check_square(m: &Mat, p: usize, what: &str) -> Result<()> {
    if m.nrows() != p || m.ncols() != p {
        return Err(FairGmError::Shape(format!(
            "{what}: expected {p}x{p}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_eigenvalues() {
        let m = Mat::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SpdFactor::new(&m).unwrap();
        let by_eig: f64 = eigenvalues(&m).iter().map(|v| v.ln()).sum();
        assert!((f.log_det() - by_eig).abs() < 1e-12);
        let prod = &m * f.inverse();
        assert!((prod - Mat::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
        assert_eq!(compensated_sum(std::iter::repeat_n(0.1, 10)), 1.0);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            SpdFactor::new(&m).err(),
            Some(FairGmError::NotPositiveDefinite)
        );
        assert!(!is_pd(&Mat::zeros(2, 2)));
    }
}
