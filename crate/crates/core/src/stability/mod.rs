//! Empirical stability measurements and the closed-form bounds they are
//! compared against.
//!
//! Bounds return their leading `t^{-1/2}` term only; unstated constants are
//! explicit arguments. `log` is the natural logarithm throughout.

mod baseline;
mod sweep;

pub use baseline::{least_squares, PcaRegression};
pub use sweep::{
    default_tau, fit_log_log_slope, stability_sweep, Sparsifier, SweepConfig, SweepResult, SweepRow,
};

use serde::{Deserialize, Serialize};

use crate::covariance::{stochastic_sparsify, ProbabilityAssignment};
use crate::error::{check_dim, Error, Result};
use crate::filter::{
    apply_filter, apply_stochastic_filter, empirical_lipschitz_constant, FilterTaps,
    RealizationSequence,
};
use crate::linalg::{
    distance, norm2, sym_eig, EigenDecomposition, Matrix, RandomSource, SymmetricDense,
    SymmetricOperator, SymmetricSparse,
};
use crate::model::VNNModel;

/// Mean and (population) standard deviation of per-signal distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// Signals rescaled to unit norm before measuring.
    pub normalized: usize,
}

impl DistanceStats {
    fn from_values(values: &[f64], normalized: usize) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
                count,
                normalized,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Self {
            mean,
            std: var.sqrt(),
            count,
            normalized,
        }
    }
}

/// Rows of `x` with norm above 1 are scaled to unit norm.
fn unit_ball(x: &[f64]) -> (Vec<f64>, bool) {
    let nrm = norm2(x);
    if nrm > 1.0 {
        (x.iter().map(|v| v / nrm).collect(), true)
    } else {
        (x.to_vec(), false)
    }
}

/// `||H(C1) x - H(C2) x||` over the rows of `xs`, each first brought into
/// the unit ball.
pub fn filter_distance(
    h: &FilterTaps,
    c1: &dyn SymmetricOperator,
    c2: &dyn SymmetricOperator,
    xs: &Matrix,
) -> Result<DistanceStats> {
    check_dim(c1.dim(), c2.dim())?;
    check_dim(c1.dim(), xs.cols())?;
    let mut normalized = 0;
    let mut values = Vec::with_capacity(xs.rows());
    for i in 0..xs.rows() {
        let (x, scaled) = unit_ball(xs.row(i));
        normalized += scaled as usize;
        values.push(distance(
            &apply_filter(h, c1, &x)?,
            &apply_filter(h, c2, &x)?,
        ));
    }
    Ok(DistanceStats::from_values(&values, normalized))
}

/// Frobenius distance between last-layer node features
/// `Phi(x, C1)` and `Phi(x, C2)` over the rows of `xs`.
pub fn vnn_distance(
    model: &VNNModel,
    c1: &dyn SymmetricOperator,
    c2: &dyn SymmetricOperator,
    xs: &Matrix,
) -> Result<DistanceStats> {
    check_dim(c1.dim(), c2.dim())?;
    let mut values = Vec::with_capacity(xs.rows());
    for i in 0..xs.rows() {
        let a = model.embed(c1, xs.row(i))?;
        let b = model.embed(c2, xs.row(i))?;
        values.push(distance(a.as_slice(), b.as_slice()));
    }
    Ok(DistanceStats::from_values(&values, 0))
}

/// Eigenvector matrix with columns ordered by descending eigenvalue.
fn ranked_vectors(e: &EigenDecomposition) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..e.n()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    order.into_iter().map(|k| e.vector(k)).collect()
}

/// `||V1^T x - V2^T x||` with eigenvectors matched by eigenvalue rank and
/// each `V2` column sign-flipped to maximize `v1_i^T v2_i`.
pub fn pca_distance_from_eig(
    e1: &EigenDecomposition,
    e2: &EigenDecomposition,
    xs: &Matrix,
) -> Result<DistanceStats> {
    check_dim(e1.n(), e2.n())?;
    check_dim(e1.n(), xs.cols())?;
    let v1 = ranked_vectors(e1);
    let mut v2 = ranked_vectors(e2);
    for (a, b) in v1.iter().zip(v2.iter_mut()) {
        if crate::linalg::dot(a, b) < 0.0 {
            b.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let mut normalized = 0;
    let mut values = Vec::with_capacity(xs.rows());
    for i in 0..xs.rows() {
        let (x, scaled) = unit_ball(xs.row(i));
        normalized += scaled as usize;
        let d: f64 = v1
            .iter()
            .zip(&v2)
            .map(|(a, b)| (crate::linalg::dot(a, &x) - crate::linalg::dot(b, &x)).powi(2))
            .sum();
        values.push(d.sqrt());
    }
    Ok(DistanceStats::from_values(&values, normalized))
}

pub fn pca_distance(
    c1: &SymmetricDense,
    c2: &SymmetricDense,
    xs: &Matrix,
) -> Result<DistanceStats> {
    pca_distance_from_eig(&sym_eig(c1)?, &sym_eig(c2)?, xs)
}

fn check_positive(args: &[(&str, f64)]) -> Result<()> {
    for (name, v) in args {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::invalid(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

/// Leading term of the dense VNN bound: `L F^{L-1} P sqrt(N) / sqrt(t)`.
/// The `||C|| sqrt(log(Nt)) / (nu t)` remainder is not included.
pub fn vnn_bound(p: f64, n: usize, t: usize, layers: usize, width: usize) -> Result<f64> {
    check_positive(&[
        ("P", p),
        ("N", n as f64),
        ("t", t as f64),
        ("L", layers as f64),
        ("F", width as f64),
    ])?;
    let net = layers as f64 * (width as f64).powi(layers as i32 - 1);
    Ok(net * p * (n as f64).sqrt() / (t as f64).sqrt())
}

/// Hard-thresholded filter: `t^{-1/2} P c0 sqrt(N log N) (1 + sqrt(2N))`.
pub fn hard_bound(p: f64, c0: f64, n: usize, t: usize) -> Result<f64> {
    check_positive(&[("P", p), ("c0", c0), ("N", n as f64), ("t", t as f64)])?;
    let nf = n as f64;
    Ok(p * c0 * (nf * nf.ln()).sqrt() * (1.0 + (2.0 * nf).sqrt()) / (t as f64).sqrt())
}

/// Soft-thresholded filter:
/// `t^{-1/2} P sqrt(N) C c0 max(1, lambda_max) sqrt(max(log(N/c0^2), 1)) (1 + sqrt(2N))`.
pub fn soft_bound(
    p: f64,
    c0: f64,
    n: usize,
    t: usize,
    lambda_max: f64,
    c_const: f64,
) -> Result<f64> {
    check_positive(&[
        ("P", p),
        ("c0", c0),
        ("N", n as f64),
        ("t", t as f64),
        ("lambda_max", lambda_max),
        ("C", c_const),
    ])?;
    let nf = n as f64;
    let log_term = (nf / (c0 * c0)).ln().max(1.0).sqrt();
    Ok(
        p * nf.sqrt() * c_const * c0 * lambda_max.max(1.0) * log_term * (1.0 + (2.0 * nf).sqrt())
            / (t as f64).sqrt(),
    )
}

/// Thresholded PCA: `t^{-1/2} c0 N sqrt(2 log N) / min_gap`.
pub fn sparse_pca_bound(c0: f64, n: usize, t: usize, min_gap: f64) -> Result<f64> {
    check_positive(&[
        ("c0", c0),
        ("N", n as f64),
        ("t", t as f64),
        ("min_gap", min_gap),
    ])?;
    let nf = n as f64;
    Ok(c0 * nf * (2.0 * nf.ln()).sqrt() / min_gap / (t as f64).sqrt())
}

/// `Q = sum_i sum_n c_in^2 (1 - p_in)` over all ordered pairs.
pub fn q_term(c: &dyn SymmetricOperator, probs: &ProbabilityAssignment) -> Result<f64> {
    check_dim(c.dim(), probs.n())?;
    let n = c.dim();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = c.entry(i, j);
            if v != 0.0 {
                q += v * v * (1.0 - probs.get(i, j));
            }
        }
    }
    Ok(q)
}

/// `trace(E^2)` for symmetric `E`, by explicit multiplication.
fn trace_of_square(e: &SymmetricDense) -> f64 {
    let n = e.n();
    (0..n)
        .map(|i| (0..n).map(|k| e.get(i, k) * e.get(k, i)).sum::<f64>())
        .sum()
}

/// Exact `E[trace(E_r^2)]` by enumerating every keep/drop pattern of the
/// stored off-diagonal pairs. Limited to 20 pairs.
pub fn q_term_exhaustive(c: &SymmetricSparse, probs: &ProbabilityAssignment) -> Result<f64> {
    check_dim(c.n(), probs.n())?;
    let pairs: Vec<(usize, usize, f64)> = c
        .upper_triplets()
        .into_iter()
        .filter(|(i, j, _)| i != j)
        .collect();
    if pairs.len() > 20 {
        return Err(Error::invalid(format!(
            "{} pairs is too many to enumerate",
            pairs.len()
        )));
    }
    let n = c.n();
    let mut expectation = 0.0;
    for mask in 0u32..(1u32 << pairs.len()) {
        let mut weight = 1.0;
        let mut e = SymmetricDense::zeros(n);
        for (b, &(i, j, v)) in pairs.iter().enumerate() {
            let p = probs.get(i, j);
            if mask & (1 << b) != 0 {
                weight *= p;
            } else {
                weight *= 1.0 - p;
                e.set_sym(i, j, -v);
            }
        }
        if weight != 0.0 {
            expectation += weight * trace_of_square(&e);
        }
    }
    Ok(expectation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QCheck {
    pub mc_estimate: f64,
    pub q: f64,
    pub std_err: f64,
    pub within_3se: bool,
}

/// Monte-Carlo `E[trace(E_r^2)]` with `E_r = C~ - C`, compared with `Q`.
pub fn q_term_mc_check(
    c: &SymmetricSparse,
    probs: &ProbabilityAssignment,
    trials: usize,
    rng: &mut RandomSource,
) -> Result<QCheck> {
    if trials < 100 {
        return Err(Error::invalid("need at least 100 trials"));
    }
    let q = q_term(c, probs)?;
    let dense = c.to_dense();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let drawn = stochastic_sparsify(c, probs, rng)?;
        let e = drawn.to_dense().sub(&dense)?;
        let tr = trace_of_square(&e);
        sum += tr;
        sum_sq += tr * tr;
    }
    let m = trials as f64;
    let mean = sum / m;
    let var = ((sum_sq / m - mean * mean) * m / (m - 1.0)).max(0.0);
    let std_err = (var / m).sqrt();
    Ok(QCheck {
        mc_estimate: mean,
        q,
        std_err,
        within_3se: (mean - q).abs() <= 3.0 * std_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticMse {
    /// Mean over trials of the per-trial mean of `||H(C)x - H(C~)x||^2`.
    pub mse: f64,
    pub std_err: f64,
    pub p: f64,
    pub q: f64,
    /// Computable part of the bound, `N P^2 Q`; the unstated-constant terms
    /// are not added.
    pub npq: f64,
}

/// Mean squared output error of the stochastic filter against the filter on
/// `c`. Each trial draws a fresh realization sequence shared by all signals.
pub fn stochastic_filter_mse(
    h: &FilterTaps,
    c: &SymmetricSparse,
    probs: &ProbabilityAssignment,
    xs: &Matrix,
    trials: usize,
    rng: &mut RandomSource,
) -> Result<StochasticMse> {
    check_dim(c.n(), xs.cols())?;
    if trials < 2 || xs.rows() == 0 {
        return Err(Error::invalid("need at least 2 trials and one signal"));
    }
    let signals: Vec<Vec<f64>> = (0..xs.rows()).map(|i| unit_ball(xs.row(i)).0).collect();
    let clean: Vec<Vec<f64>> = signals
        .iter()
        .map(|x| apply_filter(h, c, x))
        .collect::<Result<_>>()?;
    let mut per_trial = Vec::with_capacity(trials);
    for _ in 0..trials {
        let seq = RealizationSequence::draw(c, probs, h.order(), rng)?;
        let mut acc = 0.0;
        for (x, y) in signals.iter().zip(&clean) {
            acc += distance(y, &apply_stochastic_filter(h, &seq, x)?).powi(2);
        }
        per_trial.push(acc / signals.len() as f64);
    }
    let m = trials as f64;
    let mse = per_trial.iter().sum::<f64>() / m;
    let var = per_trial.iter().map(|v| (v - mse).powi(2)).sum::<f64>() / (m - 1.0);
    let eig = sym_eig(&c.to_dense())?;
    let p = if h.order() == 0 {
        0.0
    } else {
        empirical_lipschitz_constant(h, &eig.eigenvalues).unwrap_or(0.0)
    };
    let q = q_term(c, probs)?;
    Ok(StochasticMse {
        mse,
        std_err: (var / m).sqrt(),
        p,
        q,
        npq: c.n() as f64 * p * p * q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenGaps {
    /// `min_i |lambda_i - lambda_{i+1}|` in the given order.
    pub min_adjacent_gap: f64,
    /// `min_{i != j} |lambda_i - lambda_j|`.
    pub min_pairwise_gap: f64,
}

pub fn eigen_gap(eigs: &[f64]) -> Result<EigenGaps> {
    if eigs.len() < 2 {
        return Err(Error::invalid("need at least two eigenvalues"));
    }
    let min_adjacent_gap = eigs
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min);
    let mut min_pairwise_gap = f64::INFINITY;
    for i in 0..eigs.len() {
        for j in (i + 1)..eigs.len() {
            min_pairwise_gap = min_pairwise_gap.min((eigs[i] - eigs[j]).abs());
        }
    }
    Ok(EigenGaps {
        min_adjacent_gap,
        min_pairwise_gap,
    })
}
