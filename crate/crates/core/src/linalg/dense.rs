use serde::{Deserialize, Serialize};

use super::SymmetricOperator;
use crate::error::{check_dim, Error, Result};

/// Dense symmetric matrix with full row-major storage.
///
/// Symmetry is exact: constructors either verify `a[i][j] == a[j][i]`
/// bit-for-bit or build the lower triangle by mirroring the upper one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricDense {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricDense {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// Build from a function evaluated on the upper triangle (`i <= j`); the
    /// lower triangle is mirrored.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        check_dim(n * n, data.len())?;
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_dim(n, row.len())?;
            data.extend_from_slice(row);
        }
        Self::from_row_major(n, data)
    }

    pub(crate) fn from_row_major_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Set `(i, j)` and `(j, i)` together.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.n, other.n)?;
        Ok(Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Number of nonzero entries (`||A||_0`).
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Symmetric permutation `P A P^T` with `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_dim(self.n, perm.len())?;
        Ok(Self::from_fn(self.n, |i, j| self.get(perm[i], perm[j])))
    }
}

impl SymmetricOperator for SymmetricDense {
    fn dim(&self) -> usize {
        self.n
    }

    fn nnz(&self) -> usize {
        self.n * self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_block_into(&self, x: &[f64], cols: usize, y: &mut [f64]) {
        let n = self.n;
        for (i, yrow) in y.chunks_exact_mut(cols).enumerate() {
            yrow.fill(0.0);
            let arow = &self.data[i * n..(i + 1) * n];
            for (a, xrow) in arow.iter().zip(x.chunks_exact(cols)) {
                for (yc, xc) in yrow.iter_mut().zip(xrow) {
                    *yc += a * xc;
                }
            }
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }

    fn to_dense(&self) -> SymmetricDense {
        self.clone()
    }
}
