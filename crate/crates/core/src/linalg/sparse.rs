use serde::{Deserialize, Serialize};

use super::{SymmetricDense, SymmetricOperator};
use crate::error::{Error, Result};

/// Symmetric matrix in CSR form with both triangles stored explicitly.
///
/// Invariants: column indices strictly increase within each row, no explicit
/// zeros are stored, and `(i, j)` is present iff `(j, i)` is, with the same
/// value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricSparse {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricSparse {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(a: &SymmetricDense) -> Self {
        let n = a.n();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Build from upper-triangle triplets `(i, j, v)` with `i <= j`. The lower
    /// triangle is mirrored; duplicate coordinates and zero values are
    /// rejected.
    pub fn from_upper_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i > j || j >= n {
                return Err(Error::invalid(format!(
                    "triplet ({i}, {j}) is not in the upper triangle of a {n}x{n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({i}, {j})")));
            }
            if v == 0.0 {
                return Err(Error::invalid(format!("explicit zero at ({i}, {j})")));
            }
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid(format!("duplicate entry in row {i}")));
            }
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Keep a subset of stored entries, decided once per unordered pair.
    ///
    /// `keep(i, j, v)` is called exactly once for each stored pair with
    /// `i <= j`, in row-major upper-triangle order, and returns the value to
    /// store (or `None` to drop the pair). Returned zeros are dropped too.
    pub fn filter_map_pairs(&self, mut keep: impl FnMut(usize, usize, f64) -> Option<f64>) -> Self {
        let mut upper = Vec::new();
        for i in 0..self.n {
            for (j, v) in self.row_entries(i) {
                if j < i {
                    continue;
                }
                if let Some(nv) = keep(i, j, v) {
                    if nv != 0.0 {
                        upper.push((i, j, nv));
                    }
                }
            }
        }
        Self::from_upper_triplets(self.n, &upper).expect("filtered upper triangle is well formed")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Stored entries of the upper triangle (`i <= j`), row-major order.
    pub fn upper_triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| {
                self.row_entries(i)
                    .filter(move |(j, _)| *j >= i)
                    .map(move |(j, v)| (i, j, v))
            })
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        if factor == 0.0 {
            return Self::empty(self.n);
        }
        out
    }

    /// True when every diagonal entry is stored.
    pub fn has_full_diagonal(&self) -> bool {
        (0..self.n).all(|i| {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            self.col_idx[r].binary_search(&i).is_ok()
        })
    }

    /// Checks every structural invariant. Used by tests and after parsing.
    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.n + 1 || self.row_ptr[self.n] != self.values.len() {
            return Err(Error::invalid("inconsistent CSR row pointers"));
        }
        for i in 0..self.n {
            let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "row {i} columns not strictly increasing"
                )));
            }
            for (j, v) in self.row_entries(i) {
                if v == 0.0 {
                    return Err(Error::invalid(format!("explicit zero at ({i}, {j})")));
                }
                if self.get(j, i).to_bits() != v.to_bits() {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

impl SymmetricOperator for SymmetricSparse {
    fn dim(&self) -> usize {
        self.n
    }

    fn nnz(&self) -> usize {
        self.values.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    fn apply_block_into(&self, x: &[f64], cols: usize, y: &mut [f64]) {
        for (i, yrow) in y.chunks_exact_mut(cols).enumerate() {
            yrow.fill(0.0);
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            for (&j, &v) in self.col_idx[r.clone()].iter().zip(&self.values[r]) {
                let xrow = &x[j * cols..(j + 1) * cols];
                for (yc, xc) in yrow.iter_mut().zip(xrow) {
                    *yc += v * xc;
                }
            }
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}
