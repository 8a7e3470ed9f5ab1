//! Symmetric matrix containers, matrix-vector kernels, the Jacobi
//! eigensolver and the seeded random source used throughout the crate.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`. Blocks of signals (an `n x f`
//! feature matrix) are stored row-major, so row `i` holds the `f` features
//! of node `i`.

mod dense;
mod eigen;
pub mod io;
mod matrix;
mod rng;
mod sparse;

pub use dense::SymmetricDense;
pub use eigen::{lambda_max, sym_eig, EigenDecomposition};
pub use matrix::Matrix;
pub use rng::RandomSource;
pub use sparse::SymmetricSparse;

use crate::error::{check_dim, Result};

/// A real symmetric linear operator that can be applied to vectors and
/// row-major blocks of vectors.
pub trait SymmetricOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of stored entries (`n * n` for dense storage).
    fn nnz(&self) -> usize;

    /// `y = A x`. Lengths are the caller's responsibility.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    /// `Y = A X` where `X` and `Y` are row-major `n x cols` blocks.
    fn apply_block_into(&self, x: &[f64], cols: usize, y: &mut [f64]);

    fn entry(&self, i: usize, j: usize) -> f64;

    /// Checked `A x`.
    fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn to_dense(&self) -> SymmetricDense {
        let n = self.dim();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = self.entry(i, j);
            }
        }
        SymmetricDense::from_row_major_unchecked(n, data)
    }
}

/// Sparse matrix-vector product `S x` in `O(nnz)`.
pub fn spmv(s: &SymmetricSparse, x: &[f64]) -> Result<Vec<f64>> {
    s.matvec(x)
}

/// Dense matrix-vector product `A x` in `O(n^2)`.
pub fn dense_matvec(a: &SymmetricDense, x: &[f64]) -> Result<Vec<f64>> {
    a.matvec(x)
}

/// Convert a dense matrix to CSR storage, keeping exactly its nonzero entries.
pub fn to_sparse(a: &SymmetricDense) -> SymmetricSparse {
    SymmetricSparse::from_dense(a)
}

/// A covariance matrix held in whichever storage suits it.
#[derive(Debug, Clone, PartialEq)]
pub enum CovMatrix {
    Dense(SymmetricDense),
    Sparse(SymmetricSparse),
}

impl CovMatrix {
    pub fn scaled(&self, factor: f64) -> CovMatrix {
        match self {
            CovMatrix::Dense(a) => CovMatrix::Dense(a.scaled(factor)),
            CovMatrix::Sparse(s) => CovMatrix::Sparse(s.scaled(factor)),
        }
    }

    pub fn as_operator(&self) -> &dyn SymmetricOperator {
        match self {
            CovMatrix::Dense(a) => a,
            CovMatrix::Sparse(s) => s,
        }
    }
}

impl From<SymmetricDense> for CovMatrix {
    fn from(a: SymmetricDense) -> Self {
        CovMatrix::Dense(a)
    }
}

impl From<SymmetricSparse> for CovMatrix {
    fn from(s: SymmetricSparse) -> Self {
        CovMatrix::Sparse(s)
    }
}

impl SymmetricOperator for CovMatrix {
    fn dim(&self) -> usize {
        self.as_operator().dim()
    }
    fn nnz(&self) -> usize {
        self.as_operator().nnz()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.as_operator().apply_into(x, y)
    }
    fn apply_block_into(&self, x: &[f64], cols: usize, y: &mut [f64]) {
        self.as_operator().apply_block_into(x, cols, y)
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.as_operator().entry(i, j)
    }
    fn to_dense(&self) -> SymmetricDense {
        match self {
            CovMatrix::Dense(a) => a.clone(),
            CovMatrix::Sparse(s) => s.to_dense(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Spectral norm of a symmetric matrix, i.e. its largest absolute eigenvalue.
pub fn spectral_norm(a: &SymmetricDense) -> Result<f64> {
    let eig = sym_eig(a)?;
    Ok(eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs())))
}
