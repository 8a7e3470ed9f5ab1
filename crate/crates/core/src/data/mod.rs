//! Synthetic covariance generators, Gaussian sampling, regression targets,
//! splits and normalization. Archive and CSV input live in [`archive`].

pub mod archive;

pub use archive::{load_csv, load_dataset, save_dataset, CsvSchema};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{sym_eig, Matrix, RandomSource, SymmetricDense};
use crate::model::{Target, TrainingSet};

/// Eigenvalues down to this are treated as rounding noise and clamped to 0.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Parameters of a synthetic covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticCovSpec {
    /// Random sparse support, at most `c0` off-diagonal nonzeros per row,
    /// made SPD by diagonal dominance.
    SparseSpd { n: usize, density: f64, c0: usize },
    /// `sum_q beta_q v_q v_q^T + I` with `v_q` on disjoint blocks of `c0`
    /// indices.
    Spiked {
        n: usize,
        c0: usize,
        betas: Vec<f64>,
    },
    /// Dense correlation matrix whose off-diagonal entries concentrate near
    /// `rho`.
    DenseCorrelated { n: usize, rho: f64 },
}

impl SyntheticCovSpec {
    pub fn sparse_cov(n: usize) -> Self {
        SyntheticCovSpec::SparseSpd {
            n,
            density: 0.03,
            c0: 5,
        }
    }

    pub fn large_cov(n: usize) -> Self {
        SyntheticCovSpec::DenseCorrelated { n, rho: 0.7 }
    }

    pub fn small_cov(n: usize) -> Self {
        SyntheticCovSpec::DenseCorrelated { n, rho: 0.1 }
    }

    pub fn n(&self) -> usize {
        match self {
            SyntheticCovSpec::SparseSpd { n, .. }
            | SyntheticCovSpec::Spiked { n, .. }
            | SyntheticCovSpec::DenseCorrelated { n, .. } => *n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        match self {
            SyntheticCovSpec::SparseSpd { n, density, c0 } => {
                if !(*density > 0.0 && *density <= 1.0) {
                    return Err(Error::invalid(format!("density {density} outside (0, 1]")));
                }
                if c0 >= n {
                    return Err(Error::invalid(format!(
                        "row sparsity c0 = {c0} must be below n = {n}"
                    )));
                }
            }
            SyntheticCovSpec::Spiked { n, c0, betas } => {
                if *c0 == 0 && !betas.is_empty() {
                    return Err(Error::invalid("spike support size c0 must be positive"));
                }
                if betas.len() * c0 > *n {
                    return Err(Error::invalid(format!(
                        "{} spikes of support {c0} do not fit disjointly in n = {n}",
                        betas.len()
                    )));
                }
                if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                    return Err(Error::invalid("spike strengths must be positive"));
                }
            }
            SyntheticCovSpec::DenseCorrelated { rho, .. } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    return Err(Error::invalid(format!(
                        "target correlation {rho} outside (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draw the true covariance.
    pub fn generate(&self, rng: &mut RandomSource) -> Result<SymmetricDense> {
        self.validate()?;
        Ok(match self {
            SyntheticCovSpec::SparseSpd { n, density, c0 } => {
                gen_sparse_spd(*n, *density, *c0, rng)?
            }
            SyntheticCovSpec::Spiked { n, c0, betas } => gen_spiked(*n, *c0, betas, rng)?.cov,
            SyntheticCovSpec::DenseCorrelated { n, rho } => gen_dense_correlated(*n, *rho, rng)?,
        })
    }
}

/// Sparse SPD matrix: candidate pairs are visited in random order and kept
/// with probability `density` while both rows have fewer than `c0`
/// off-diagonal entries. Off-diagonal values are `+-U[0.3, 0.8]`; each
/// diagonal entry is its row's absolute off-diagonal sum plus 0.1.
pub fn gen_sparse_spd(
    n: usize,
    density: f64,
    c0: usize,
    rng: &mut RandomSource,
) -> Result<SymmetricDense> {
    SyntheticCovSpec::SparseSpd { n, density, c0 }.validate()?;
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    let order = rng.permutation(pairs.len());
    let mut degree = vec![0usize; n];
    let mut c = SymmetricDense::zeros(n);
    for k in order {
        let (i, j) = pairs[k];
        if !rng.bernoulli(density) || degree[i] >= c0 || degree[j] >= c0 {
            continue;
        }
        let mag = rng.uniform_range(0.3, 0.8);
        let v = if rng.bernoulli(0.5) { mag } else { -mag };
        c.set_sym(i, j, v);
        degree[i] += 1;
        degree[j] += 1;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| c.get(i, j).abs()).sum();
        c.set_sym(i, i, off + 0.1);
    }
    Ok(c)
}

/// Spiked covariance with its spikes, for sampling and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModel {
    pub cov: SymmetricDense,
    pub betas: Vec<f64>,
    /// Unit-norm spike directions.
    pub spikes: Vec<Vec<f64>>,
    pub supports: Vec<Vec<usize>>,
    pub theta: f64,
}

impl SpikedModel {
    /// `x = sum_q sqrt(beta_q) u_q v_q + z`, one row per sample.
    pub fn sample(&self, t: usize, rng: &mut RandomSource) -> Matrix {
        let n = self.cov.n();
        let mut x = Matrix::zeros(t, n);
        for s in 0..t {
            let row = x.row_mut(s);
            for (beta, v) in self.betas.iter().zip(&self.spikes) {
                let u = beta.sqrt() * rng.normal();
                for (r, vi) in row.iter_mut().zip(v) {
                    *r += u * vi;
                }
            }
            for r in row.iter_mut() {
                *r += rng.normal();
            }
        }
        x
    }
}

pub fn gen_spiked(
    n: usize,
    c0: usize,
    betas: &[f64],
    rng: &mut RandomSource,
) -> Result<SpikedModel> {
    SyntheticCovSpec::Spiked {
        n,
        c0,
        betas: betas.to_vec(),
    }
    .validate()?;
    let scale = 1.0 / (c0.max(1) as f64).sqrt();
    let mut spikes = Vec::with_capacity(betas.len());
    let mut supports = Vec::with_capacity(betas.len());
    let mut cov = SymmetricDense::identity(n);
    for (q, beta) in betas.iter().enumerate() {
        let support: Vec<usize> = (q * c0..(q + 1) * c0).collect();
        let mut v = vec![0.0; n];
        for &i in &support {
            v[i] = if rng.bernoulli(0.5) { scale } else { -scale };
        }
        for &i in &support {
            for &j in &support {
                if i <= j {
                    cov.set_sym(i, j, cov.get(i, j) + beta * v[i] * v[j]);
                }
            }
        }
        spikes.push(v);
        supports.push(support);
    }
    Ok(SpikedModel {
        cov,
        betas: betas.to_vec(),
        spikes,
        supports,
        theta: 1.0,
    })
}

/// `A A^T / n + 0.01 I` with `a_ij = 1 + s z_ij`, rescaled to unit diagonal.
/// `s^2 = 1/rho - 1` puts the off-diagonal correlations near `rho`.
pub fn gen_dense_correlated(n: usize, rho: f64, rng: &mut RandomSource) -> Result<SymmetricDense> {
    SyntheticCovSpec::DenseCorrelated { n, rho }.validate()?;
    let s = (1.0 / rho - 1.0).sqrt();
    let a: Vec<f64> = (0..n * n).map(|_| 1.0 + s * rng.normal()).collect();
    let mut c = SymmetricDense::from_fn(n, |i, j| {
        let dot = crate::linalg::dot(&a[i * n..(i + 1) * n], &a[j * n..(j + 1) * n]) / n as f64;
        if i == j {
            dot + 0.01
        } else {
            dot
        }
    });
    let d: Vec<f64> = c.diagonal().iter().map(|v| v.sqrt()).collect();
    c = SymmetricDense::from_fn(n, |i, j| {
        if i == j {
            1.0
        } else {
            c.get(i, j) / (d[i] * d[j])
        }
    });
    Ok(c)
}

/// Factor `B` with `B B^T = C` (rows are nodes), clamping eigenvalues in
/// `[-PSD_TOLERANCE, 0)` to 0.
pub fn covariance_factor(c: &SymmetricDense) -> Result<SymmetricFactor> {
    let eig = sym_eig(c)?;
    let lmin = eig.min_eigenvalue();
    if lmin < -PSD_TOLERANCE {
        return Err(Error::NotPsd(lmin));
    }
    let n = c.n();
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let v = eig.vectors_row_major();
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            b[i * n + k] = v[i * n + k] * roots[k];
        }
    }
    Ok(SymmetricFactor { n, b })
}

/// Square-root factor of a covariance, reusable across draws.
#[derive(Debug, Clone)]
pub struct SymmetricFactor {
    n: usize,
    b: Vec<f64>,
}

impl SymmetricFactor {
    pub fn sample(&self, t: usize, rng: &mut RandomSource) -> Matrix {
        let n = self.n;
        let mut x = Matrix::zeros(t, n);
        let mut z = vec![0.0; n];
        for s in 0..t {
            for zi in z.iter_mut() {
                *zi = rng.normal();
            }
            let row = x.row_mut(s);
            for (i, r) in row.iter_mut().enumerate() {
                *r = crate::linalg::dot(&self.b[i * n..(i + 1) * n], &z);
            }
        }
        x
    }
}

/// `t` i.i.d. draws from `N(0, C)`, one per row.
pub fn gaussian_samples(c: &SymmetricDense, t: usize, rng: &mut RandomSource) -> Result<Matrix> {
    Ok(covariance_factor(c)?.sample(t, rng))
}

/// `y_i = w^T x_i + u_i` with `w_j ~ U(0, 1)` drawn once and
/// `u_i ~ N(0, noise_var)`. Returns the targets and `w`.
pub fn regression_targets(
    x: &Matrix,
    noise_var: f64,
    rng: &mut RandomSource,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::invalid(
            "noise variance must be finite and non-negative",
        ));
    }
    let w: Vec<f64> = (0..x.cols()).map(|_| rng.uniform()).collect();
    let sd = noise_var.sqrt();
    let y = (0..x.rows())
        .map(|i| crate::linalg::dot(&w, x.row(i)) + sd * rng.normal())
        .collect();
    Ok((y, w))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn all_train(samples: usize) -> Self {
        Splits {
            train: (0..samples).collect(),
            ..Default::default()
        }
    }

    /// Disjoint and covering `0..samples`.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let mut seen = vec![false; samples];
        for &i in self.train.iter().chain(&self.valid).chain(&self.test) {
            if i >= samples || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!(
                    "split index {i} out of range or repeated"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("splits do not cover every sample"));
        }
        Ok(())
    }
}

/// Random permutation cut into contiguous train/valid/test blocks of
/// `round(f * samples)` (test takes the remainder).
pub fn split(samples: usize, fractions: [f64; 3], rng: &mut RandomSource) -> Result<Splits> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let n_train = ((fractions[0] * samples as f64).round() as usize).min(samples);
    let n_valid = ((fractions[1] * samples as f64).round() as usize).min(samples - n_train);
    let n_test = samples - n_train - n_valid;
    for (f, size, name) in [
        (fractions[0], n_train, "train"),
        (fractions[1], n_valid, "validation"),
        (fractions[2], n_test, "test"),
    ] {
        if f > 0.0 && size == 0 {
            return Err(Error::invalid(format!(
                "{name} split of {samples} samples is empty"
            )));
        }
    }
    let perm = rng.permutation(samples);
    Ok(Splits {
        train: perm[..n_train].to_vec(),
        valid: perm[n_train..n_train + n_valid].to_vec(),
        test: perm[n_train + n_valid..].to_vec(),
    })
}

/// Standardize each column with mean and variance taken over the rows in
/// `stats_from`. Constant columns are left untouched and reported.
pub fn znormalize(x: &Matrix, stats_from: &[usize]) -> Result<(Matrix, Vec<usize>)> {
    if stats_from.is_empty() {
        return Err(Error::invalid("normalization subset is empty"));
    }
    if let Some(&bad) = stats_from.iter().find(|&&i| i >= x.rows()) {
        return Err(Error::invalid(format!("row {bad} out of range")));
    }
    let m = stats_from.len() as f64;
    let mut out = x.clone();
    let mut constant = Vec::new();
    for j in 0..x.cols() {
        let mean = stats_from.iter().map(|&i| x.get(i, j)).sum::<f64>() / m;
        let var = stats_from
            .iter()
            .map(|&i| (x.get(i, j) - mean).powi(2))
            .sum::<f64>()
            / m;
        if var <= f64::EPSILON * mean.abs().max(1.0) {
            constant.push(j);
            continue;
        }
        let sd = var.sqrt();
        for i in 0..x.rows() {
            out.set(i, j, (x.get(i, j) - mean) / sd);
        }
    }
    Ok((out, constant))
}

/// Where a data set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
    /// Number of classes; `None` for regression.
    pub classes: Option<usize>,
    #[serde(skip)]
    pub true_cov: Option<SymmetricDense>,
}

/// Samples in rows (`N` node values each), targets and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<Target>,
    pub splits: Splits,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<Target>, splits: Splits, meta: DatasetMeta) -> Result<Self> {
        check_dim(x.rows(), y.len())?;
        splits.validate(x.rows())?;
        x.check_finite()?;
        Ok(Self { x, y, splits, meta })
    }

    pub fn samples(&self) -> usize {
        self.x.rows()
    }

    pub fn nodes(&self) -> usize {
        self.x.cols()
    }

    pub fn training_set(&self) -> TrainingSet<'_> {
        TrainingSet {
            inputs: &self.x,
            targets: &self.y,
            train: &self.splits.train,
            valid: &self.splits.valid,
        }
    }

    /// Rows of the training split, for covariance estimation.
    pub fn train_rows(&self) -> Matrix {
        self.x.select_rows(&self.splits.train)
    }
}

/// Regression data set from a synthetic covariance: `samples` Gaussian
/// draws, noisy linear targets, 80/10/10 split.
pub fn synthetic_regression(
    spec: &SyntheticCovSpec,
    samples: usize,
    noise_var: f64,
    seed: u64,
) -> Result<Dataset> {
    let root = RandomSource::new(seed, 0);
    let mut params = serde_json::to_value(spec)?;
    let (cov, x) = match spec {
        SyntheticCovSpec::Spiked { n, c0, betas } => {
            let model = gen_spiked(*n, *c0, betas, &mut root.fork(1))?;
            let x = model.sample(samples, &mut root.fork(2));
            params["theta"] = model.theta.into();
            params["supports"] = serde_json::to_value(&model.supports)?;
            (model.cov, x)
        }
        _ => {
            let cov = spec.generate(&mut root.fork(1))?;
            let x = gaussian_samples(&cov, samples, &mut root.fork(2))?;
            (cov, x)
        }
    };
    let (y, w) = regression_targets(&x, noise_var, &mut root.fork(3))?;
    params["noise_var"] = noise_var.into();
    params["samples"] = samples.into();
    params["w"] = serde_json::to_value(&w)?;
    let splits = split(samples, [0.8, 0.1, 0.1], &mut root.fork(4))?;
    let meta = DatasetMeta {
        generator: match spec {
            SyntheticCovSpec::SparseSpd { .. } => "sparse_spd",
            SyntheticCovSpec::Spiked { .. } => "spiked",
            SyntheticCovSpec::DenseCorrelated { .. } => "dense_correlated",
        }
        .to_string(),
        seed: Some(seed),
        params,
        classes: None,
        true_cov: Some(cov),
    };
    Dataset::new(x, y.into_iter().map(Target::Value).collect(), splits, meta)
}
