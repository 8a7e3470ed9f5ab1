use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, sym_eig, Matrix, SymmetricDense};

/// Least squares `min ||A w - y||^2 + ridge ||w||^2` through the normal
/// equations and a Cholesky factorization. `a` holds one observation per row.
pub fn least_squares(a: &Matrix, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    check_dim(a.rows(), y.len())?;
    let d = a.cols();
    let mut g = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for (i, &yi) in y.iter().enumerate() {
        let row = a.row(i);
        for j in 0..d {
            rhs[j] += row[j] * yi;
            for k in j..d {
                g[j * d + k] += row[j] * row[k];
            }
        }
    }
    for j in 0..d {
        g[j * d + j] += ridge;
        for k in 0..j {
            g[j * d + k] = g[k * d + j];
        }
    }
    // In-place Cholesky, lower triangle.
    for j in 0..d {
        let mut s = g[j * d + j];
        for k in 0..j {
            s -= g[j * d + k] * g[j * d + k];
        }
        if s.is_nan() || s <= 0.0 {
            return Err(Error::NotPsd(s));
        }
        let l = s.sqrt();
        g[j * d + j] = l;
        for i in (j + 1)..d {
            let mut s = g[i * d + j];
            for k in 0..j {
                s -= g[i * d + k] * g[j * d + k];
            }
            g[i * d + j] = s / l;
        }
    }
    let mut z = rhs;
    for i in 0..d {
        for k in 0..i {
            z[i] -= g[i * d + k] * z[k];
        }
        z[i] /= g[i * d + i];
    }
    for i in (0..d).rev() {
        for k in (i + 1)..d {
            z[i] -= g[k * d + i] * z[k];
        }
        z[i] /= g[i * d + i];
    }
    Ok(z)
}

/// Linear regression on the leading principal components of a covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRegression {
    /// `k` leading eigenvectors, each of length `n`.
    pub basis: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl PcaRegression {
    pub fn fit(
        c: &SymmetricDense,
        x: &Matrix,
        y: &[f64],
        rows: &[usize],
        components: usize,
    ) -> Result<Self> {
        check_dim(c.n(), x.cols())?;
        if components == 0 || components > c.n() || rows.is_empty() {
            return Err(Error::invalid(format!(
                "PCA regression needs 1..={} components and a non-empty fit set",
                c.n()
            )));
        }
        let eig = sym_eig(c)?;
        let basis: Vec<Vec<f64>> = (0..components).map(|k| eig.vector(k)).collect();
        let mut design = Matrix::zeros(rows.len(), components + 1);
        let mut targets = Vec::with_capacity(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            let xi = x.row(i);
            for (k, v) in basis.iter().enumerate() {
                design.set(r, k, dot(v, xi));
            }
            design.set(r, components, 1.0);
            targets.push(y[i]);
        }
        let w = least_squares(&design, &targets, 1e-9 * rows.len() as f64)?;
        Ok(Self {
            basis,
            intercept: w[components],
            weights: w[..components].to_vec(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .basis
                .iter()
                .zip(&self.weights)
                .map(|(v, w)| w * dot(v, x))
                .sum::<f64>()
    }

    pub fn mae(&self, x: &Matrix, y: &[f64], rows: &[usize]) -> f64 {
        rows.iter()
            .map(|&i| (self.predict(x.row(i)) - y[i]).abs())
            .sum::<f64>()
            / rows.len().max(1) as f64
    }
}
