use super::{SymmetricDense, SymmetricOperator};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const REL_TOL: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix.
///
/// `eigenvalues` are sorted in descending order and column `i` of
/// `eigenvectors` (row-major `n x n`) pairs with `eigenvalues[i]`. Within each
/// eigenvector the entry of largest magnitude is non-negative, ties going to
/// the lowest index.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    eigenvectors: Vec<f64>,
    n: usize,
}

impl EigenDecomposition {
    /// Eigenpairs supplied by the caller, in any order and with any signs.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors_row_major: Vec<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        crate::error::check_dim(n * n, eigenvectors_row_major.len())?;
        if let Some(k) = eigenvalues
            .iter()
            .chain(&eigenvectors_row_major)
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite(k));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors: eigenvectors_row_major,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Eigenvector `k` as an owned vector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.eigenvectors[i * self.n + k])
            .collect()
    }

    /// Row-major `n x n` eigenvector matrix (eigenvectors in columns).
    pub fn vectors_row_major(&self) -> &[f64] {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `V^T x`
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, xi) in x.iter().enumerate() {
            let row = &self.eigenvectors[i * n..(i + 1) * n];
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * xi;
            }
        }
        out
    }

    /// `V diag(f(lambda)) V^T` as a dense matrix.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymmetricDense {
        let n = self.n;
        let scaled: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let vi = &self.eigenvectors[i * n..(i + 1) * n];
            for j in i..n {
                let vj = &self.eigenvectors[j * n..(j + 1) * n];
                let s: f64 = (0..n).map(|k| vi[k] * scaled[k] * vj[k]).sum();
                data[i * n + j] = s;
                data[j * n + i] = s;
            }
        }
        SymmetricDense::from_row_major_unchecked(n, data)
    }

    pub fn reconstruct(&self) -> SymmetricDense {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps over all `(p, q)` pairs until the off-diagonal Frobenius norm drops
/// to `1e-12 * ||A||_F`; gives up after 100 sweeps.
pub fn sym_eig(a: &SymmetricDense) -> Result<EigenDecomposition> {
    let n = a.n();
    let mut m = a.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.frobenius_norm();
    let target = REL_TOL * scale;

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[i * n + j] * m[i * n + j];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    let mut off = off_norm(&m);
    while off > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        off = off_norm(&m);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| m[k * n + k]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        let mut best = 0;
        for i in 0..n {
            if v[i * n + k].abs() > v[best * n + k].abs() {
                best = i;
            }
        }
        let sign = if v[best * n + k] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[i * n + col] = sign * v[i * n + k];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        n,
    })
}

/// Largest-magnitude eigenvalue by power iteration, stopping when the
/// Rayleigh quotient changes by less than `rel_tol` (relative).
///
/// For positive semidefinite inputs this is `lambda_max`.
pub fn lambda_max(op: &dyn SymmetricOperator, rel_tol: f64) -> f64 {
    let n = op.dim();
    // Deterministic start with no symmetry that could make it orthogonal to
    // the top eigenvector of structured matrices.
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i as f64) * 0.754_877_666).fract())
        .collect();
    let nx = super::norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; n];
    let mut prev = f64::NAN;
    for _ in 0..10_000 {
        op.apply_into(&x, &mut y);
        let rq = super::dot(&x, &y);
        let ny = super::norm2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        if (rq - prev).abs() <= rel_tol * rq.abs() {
            return rq.abs();
        }
        prev = rq;
    }
    prev.abs()
}
