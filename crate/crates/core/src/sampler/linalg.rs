//! Gaussian draws for the conjugate regression block.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const JITTERS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky with jitter escalation relative to the mean diagonal.
pub fn cholesky_jittered(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let dim = a.nrows();
    let diag = a.diagonal();
    let max_diag = diag.max();
    let min_diag = diag.min();
    let mean_diag = if dim > 0 { diag.sum() / dim as f64 } else { 1.0 };
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let mut last = 0.0;
    for j in JITTERS {
        last = j * mean_diag.abs().max(f64::MIN_POSITIVE);
        let mut b = a.clone();
        for i in 0..dim {
            b[(i, i)] += last;
        }
        if let Some(c) = Cholesky::new(b) {
            return Ok(c);
        }
    }
    Err(Error::Factorization {
        dim,
        max_diag,
        min_diag,
        jitter: last,
    })
}

fn normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Cross-products of a fixed regression problem, reused across sweeps.
#[derive(Clone, Debug)]
pub struct RidgeProblem {
    pub z: DMatrix<f64>,
    pub r: DVector<f64>,
    /// `Z'Z` and `Z'r`, only kept when the Cholesky route is used.
    ztz: Option<DMatrix<f64>>,
    ztr: Option<DVector<f64>>,
}

impl RidgeProblem {
    pub fn new(z: DMatrix<f64>, r: DVector<f64>) -> Self {
        let (n, p) = z.shape();
        let (ztz, ztr) = if p <= n {
            (Some(z.tr_mul(&z)), Some(z.tr_mul(&r)))
        } else {
            (None, None)
        };
        Self { z, r, ztz, ztr }
    }

    pub fn ncols(&self) -> usize {
        self.z.ncols()
    }

    /// Draw `theta ~ N(A^-1 Z'r / s2, A^-1)` with `A = Z'Z / s2 + diag(1 / prior_var)`.
    ///
    /// Uses a `p x p` Cholesky when `p <= n` and the `n x n` data-space
    /// sampler of Bhattacharya et al. otherwise.
    pub fn draw<R: Rng + ?Sized>(&self, s2: f64, prior_var: &[f64], rng: &mut R) -> Result<DVector<f64>> {
        let (n, p) = self.z.shape();
        if p == 0 {
            return Ok(DVector::zeros(0));
        }
        match (&self.ztz, &self.ztr) {
            (Some(ztz), Some(ztr)) => {
                let mut a = ztz / s2;
                for i in 0..p {
                    a[(i, i)] += 1.0 / prior_var[i];
                }
                let chol = cholesky_jittered(a)?;
                let mean = chol.solve(&(ztr / s2));
                // L L' = A, so L'^-1 xi has covariance A^-1
                let xi = normals(p, rng);
                let dev = chol
                    .l()
                    .tr_solve_lower_triangular(&xi)
                    .ok_or(Error::Factorization {
                        dim: p,
                        max_diag: f64::NAN,
                        min_diag: f64::NAN,
                        jitter: 0.0,
                    })?;
                Ok(mean + dev)
            }
            _ => {
                let scale = s2.sqrt();
                let u = DVector::from_iterator(
                    p,
                    prior_var.iter().map(|&v| v.sqrt() * rng.sample::<f64, _>(StandardNormal)),
                );
                let delta = normals(n, rng);
                // W = Phi D^{1/2}, Phi = Z / sqrt(s2)
                let mut w = self.z.clone();
                for (j, mut col) in w.column_iter_mut().enumerate() {
                    col *= prior_var[j].sqrt() / scale;
                }
                let mut m = &w * w.transpose();
                for i in 0..n {
                    m[(i, i)] += 1.0;
                }
                let v = &self.z * &u / scale + delta;
                let rhs = &self.r / scale - v;
                let sol = cholesky_jittered(m)?.solve(&rhs);
                let mut theta = self.z.tr_mul(&sol) / scale;
                for j in 0..p {
                    theta[j] = u[j] + prior_var[j] * theta[j];
                }
                Ok(theta)
            }
        }
    }

    /// Closed-form posterior mean and covariance (small problems and tests).
    pub fn posterior_moments(&self, s2: f64, prior_var: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = self.z.ncols();
        let mut a = self.z.tr_mul(&self.z) / s2;
        for i in 0..p {
            a[(i, i)] += 1.0 / prior_var[i];
        }
        let chol = cholesky_jittered(a)?;
        let mean = chol.solve(&(self.z.tr_mul(&self.r) / s2));
        Ok((mean, chol.inverse()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_moments(n: usize, p: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prior: Vec<f64> = (0..p).map(|j| 0.2 + j as f64 * 0.3).collect();
        let prob = RidgeProblem::new(z, r);
        let s2 = 0.7;
        let (mean, cov) = prob.posterior_moments(s2, &prior).unwrap();
        let m = 40_000;
        let mut acc = DVector::zeros(p);
        let mut acc2 = DMatrix::zeros(p, p);
        for _ in 0..m {
            let t = prob.draw(s2, &prior, &mut rng).unwrap();
            acc += &t;
            acc2 += &t * t.transpose();
        }
        let emp_mean = acc / m as f64;
        let emp_cov = acc2 / m as f64 - &emp_mean * emp_mean.transpose();
        for j in 0..p {
            let se = (cov[(j, j)] / m as f64).sqrt();
            assert!((emp_mean[j] - mean[j]).abs() < 4.0 * se, "mean {j}");
            for k in 0..p {
                let se_c = ((cov[(j, j)] * cov[(k, k)] + cov[(j, k)].powi(2)) / m as f64).sqrt();
                assert!((emp_cov[(j, k)] - cov[(j, k)]).abs() < 4.0 * se_c, "cov {j},{k}");
            }
        }
    }

    #[test]
    fn cholesky_route_matches_closed_form() {
        check_moments(30, 4, 1);
    }

    #[test]
    fn data_space_route_matches_closed_form() {
        check_moments(3, 5, 2);
    }

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_jittered(a).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_jittered(bad), Err(Error::Factorization { dim: 2, .. })));
    }
}
