//! Sample covariance estimation and the three sparsifiers: hard
//! thresholding, soft thresholding, and stochastic edge dropping driven by
//! per-entry keep probabilities (ACV, RCV, or thresholds recast as
//! probabilities).

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    sym_eig, to_sparse, Matrix, RandomSource, SymmetricDense, SymmetricOperator, SymmetricSparse,
};

/// Sample covariance `(1/t) sum_i (x_i - mean)(x_i - mean)^T` with its mean and
/// sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    pub matrix: SymmetricDense,
    pub t: usize,
    pub mean: Vec<f64>,
}

impl SampleCovariance {
    /// Wrap an existing covariance estimate, e.g. one read from disk.
    pub fn from_parts(matrix: SymmetricDense, t: usize, mean: Vec<f64>) -> Result<Self> {
        if t < 2 {
            return Err(Error::invalid(format!(
                "sample count t must be at least 2, got {t}"
            )));
        }
        check_dim(matrix.n(), mean.len())?;
        Ok(Self { matrix, t, mean })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Threshold scale `tau / sqrt(t)`.
    pub fn threshold(&self, tau: f64) -> f64 {
        tau / (self.t as f64).sqrt()
    }

    /// The estimate's nonzero entries as CSR.
    pub fn support(&self) -> SymmetricSparse {
        to_sparse(&self.matrix)
    }
}

/// Estimate the mean and the `1/t`-normalized covariance of the rows of `x`
/// (`t` samples by `N` variables).
pub fn sample_covariance(x: &Matrix) -> Result<SampleCovariance> {
    let (t, n) = (x.rows(), x.cols());
    if t < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {t}")));
    }
    if n == 0 {
        return Err(Error::invalid("data has no variables"));
    }
    x.check_finite()?;
    let mean = x.column_means();
    let mut acc = vec![0.0; n * n];
    let mut centered = vec![0.0; n];
    for r in 0..t {
        for ((c, v), m) in centered.iter_mut().zip(x.row(r)).zip(&mean) {
            *c = v - m;
        }
        for i in 0..n {
            let ci = centered[i];
            let row = &mut acc[i * n + i..(i + 1) * n];
            for (a, cj) in row.iter_mut().zip(&centered[i..]) {
                *a += ci * cj;
            }
        }
    }
    let inv_t = 1.0 / t as f64;
    let matrix = SymmetricDense::from_fn(n, |i, j| {
        let v = acc[i * n + j] * inv_t;
        if i == j && v < 0.0 {
            0.0
        } else {
            v
        }
    });
    Ok(SampleCovariance { matrix, t, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdKind {
    Hard,
    Soft,
}

/// Threshold coefficient `tau` (the cut-off is `tau / sqrt(t)`) and whether
/// the diagonal is exempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub kind: ThresholdKind,
    pub tau: f64,
    pub preserve_diagonal: bool,
}

impl ThresholdSpec {
    pub fn hard(tau: f64) -> Self {
        Self {
            kind: ThresholdKind::Hard,
            tau,
            preserve_diagonal: true,
        }
    }

    pub fn soft(tau: f64) -> Self {
        Self {
            kind: ThresholdKind::Soft,
            tau,
            preserve_diagonal: true,
        }
    }

    pub fn with_preserve_diagonal(mut self, keep: bool) -> Self {
        self.preserve_diagonal = keep;
        self
    }

    fn validate(&self, expected: ThresholdKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::invalid(format!(
                "expected a {expected:?} threshold spec, got {:?}",
                self.kind
            )));
        }
        // tau = 0 is accepted and means "no thresholding".
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "tau must be finite and non-negative, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Keep `c_ij` unchanged iff `|c_ij| >= tau / sqrt(t)`.
pub fn hard_threshold(c: &SampleCovariance, spec: &ThresholdSpec) -> Result<SymmetricSparse> {
    spec.validate(ThresholdKind::Hard)?;
    let cut = c.threshold(spec.tau);
    Ok(c.support().filter_map_pairs(|i, j, v| {
        let keep = (i == j && spec.preserve_diagonal) || v.abs() >= cut;
        keep.then_some(v)
    }))
}

/// Shrink `c_ij` toward zero by `tau / sqrt(t)` when `|c_ij| > tau / sqrt(t)`,
/// zero it otherwise.
pub fn soft_threshold(c: &SampleCovariance, spec: &ThresholdSpec) -> Result<SymmetricSparse> {
    spec.validate(ThresholdKind::Soft)?;
    let cut = c.threshold(spec.tau);
    Ok(c.support().filter_map_pairs(|i, j, v| {
        if i == j && spec.preserve_diagonal {
            Some(v)
        } else if v.abs() > cut {
            Some(v - v.signum() * cut)
        } else {
            None
        }
    }))
}

/// Apply whichever thresholding `spec` names.
pub fn threshold(c: &SampleCovariance, spec: &ThresholdSpec) -> Result<SymmetricSparse> {
    match spec.kind {
        ThresholdKind::Hard => hard_threshold(c, spec),
        ThresholdKind::Soft => soft_threshold(c, spec),
    }
}

/// Symmetric keep-probabilities `p_ij` with `p_ii = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityAssignment {
    probs: SymmetricDense,
}

impl ProbabilityAssignment {
    /// Validate a full probability matrix: entries in `[0, 1]`, unit diagonal.
    pub fn from_matrix(probs: SymmetricDense) -> Result<Self> {
        let n = probs.n();
        for i in 0..n {
            if probs.get(i, i) != 1.0 {
                return Err(Error::invalid(format!("p[{i}][{i}] must be 1")));
            }
            for j in 0..n {
                let p = probs.get(i, j);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!(
                        "p[{i}][{j}] = {p} is outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { probs })
    }

    /// The same probability `p` on every off-diagonal entry.
    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} is outside [0, 1]")));
        }
        Ok(Self {
            probs: SymmetricDense::from_fn(n, |i, j| if i == j { 1.0 } else { p }),
        })
    }

    pub fn n(&self) -> usize {
        self.probs.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs.get(i, j)
    }

    pub fn as_matrix(&self) -> &SymmetricDense {
        &self.probs
    }

    /// Mean keep probability over the stored off-diagonal pairs of `support`.
    pub fn mean_over(&self, support: &SymmetricSparse) -> f64 {
        let (sum, count) = support
            .upper_triplets()
            .into_iter()
            .filter(|(i, j, _)| i != j)
            .fold((0.0, 0usize), |(s, c), (i, j, _)| {
                (s + self.get(i, j), c + 1)
            });
        if count == 0 {
            1.0
        } else {
            sum / count as f64
        }
    }
}

fn off_diagonal_pairs(c: &SymmetricSparse) -> Vec<(usize, usize, f64)> {
    c.upper_triplets()
        .into_iter()
        .filter(|(i, j, _)| i != j)
        .collect()
}

/// Absolute covariance values: `p_ij = |c_ij| / max_{k != l} |c_kl|`.
pub fn acv_probabilities(c: &SymmetricSparse) -> Result<ProbabilityAssignment> {
    let pairs = off_diagonal_pairs(c);
    let cmax = pairs.iter().fold(0.0_f64, |m, (_, _, v)| m.max(v.abs()));
    if cmax == 0.0 {
        return Err(Error::invalid(
            "ACV needs at least one nonzero off-diagonal entry (max |c_ij| is zero)",
        ));
    }
    let n = c.n();
    let mut probs = SymmetricDense::identity(n);
    for (i, j, v) in pairs {
        // The maximal entry divides to exactly 1.
        probs.set_sym(i, j, v.abs() / cmax);
    }
    Ok(ProbabilityAssignment { probs })
}

/// Ranked covariance values.
///
/// Draws one probability per stored off-diagonal pair from
/// `N(p, min((1 - p) / 3, p / 3))`, sorts the draws ascending, clips them to
/// `[0, 1]`, and hands them out by ascending `|c_ij|` so stronger
/// correlations get larger keep probabilities. Ties in `|c_ij|` are broken by
/// `(i, j)` in lexicographic order.
pub fn rcv_probabilities(
    c: &SymmetricSparse,
    p: f64,
    rng: &mut RandomSource,
) -> Result<ProbabilityAssignment> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "RCV mean probability must lie in (0, 1), got {p}"
        )));
    }
    let sigma = ((1.0 - p) / 3.0).min(p / 3.0);
    let mut pairs = off_diagonal_pairs(c);
    let mut draws: Vec<f64> = (0..pairs.len()).map(|_| p + sigma * rng.normal()).collect();
    draws.sort_by(f64::total_cmp);
    pairs.sort_by(|a, b| {
        a.2.abs()
            .total_cmp(&b.2.abs())
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut probs = SymmetricDense::identity(c.n());
    for ((i, j, _), d) in pairs.into_iter().zip(draws) {
        probs.set_sym(i, j, d.clamp(0.0, 1.0));
    }
    Ok(ProbabilityAssignment { probs })
}

/// Thresholding recast as keep probabilities: `p_ij = 1` if
/// `|c_ij| > tau / sqrt(t)`, else 0. Uses a strict inequality, unlike
/// [`hard_threshold`].
pub fn threshold_as_probabilities(c: &SampleCovariance, tau: f64) -> Result<ProbabilityAssignment> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    let cut = c.threshold(tau);
    let n = c.n();
    let probs = SymmetricDense::from_fn(n, |i, j| {
        if i == j || c.matrix.get(i, j).abs() > cut {
            1.0
        } else {
            0.0
        }
    });
    Ok(ProbabilityAssignment { probs })
}

/// One draw of `Delta (.) C`: each stored off-diagonal pair `{i, j}` is kept
/// with probability `p_ij` by a single Bernoulli draw shared by `(i, j)` and
/// `(j, i)`; the diagonal is always kept and absent entries stay absent.
pub fn stochastic_sparsify(
    c: &SymmetricSparse,
    probs: &ProbabilityAssignment,
    rng: &mut RandomSource,
) -> Result<SymmetricSparse> {
    check_dim(c.n(), probs.n())?;
    Ok(c.filter_map_pairs(|i, j, v| {
        if i == j {
            return Some(v);
        }
        let p = probs.get(i, j);
        // Always consume one draw so the stream layout does not depend on p.
        let u = rng.uniform();
        (u < p).then_some(v)
    }))
}

/// `E[||C~||_0] = (#stored diagonal) + 2 * sum_{i<j stored} p_ij`.
pub fn expected_nnz(probs: &ProbabilityAssignment, support: &SymmetricSparse) -> Result<f64> {
    check_dim(support.n(), probs.n())?;
    Ok(support
        .upper_triplets()
        .into_iter()
        .map(|(i, j, _)| if i == j { 1.0 } else { 2.0 * probs.get(i, j) })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdCheck {
    /// `||C_sparse - C_hat||_2`
    pub epsilon_gap: f64,
    pub lambda_min: f64,
    /// `lambda_min(C_hat) > epsilon_gap`
    pub satisfied: bool,
}

/// Sufficient condition for a sparsified estimate to stay PSD: the
/// sparsification error in spectral norm is below the smallest eigenvalue of
/// the sample covariance.
pub fn psd_sufficient_check(
    sparse: &SymmetricSparse,
    sample: &SampleCovariance,
) -> Result<PsdCheck> {
    check_dim(sample.n(), sparse.n())?;
    let diff = sparse.to_dense().sub(&sample.matrix)?;
    let epsilon_gap = crate::linalg::spectral_norm(&diff)?;
    let lambda_min = sym_eig(&sample.matrix)?.min_eigenvalue();
    Ok(PsdCheck {
        epsilon_gap,
        lambda_min,
        satisfied: lambda_min > epsilon_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymmetricOperator;

    fn cov(rows: &[Vec<f64>], t: usize) -> SampleCovariance {
        let m = SymmetricDense::from_rows(rows).unwrap();
        let n = m.n();
        SampleCovariance::from_parts(m, t, vec![0.0; n]).unwrap()
    }

    fn random_data(t: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = RandomSource::new(seed, 0);
        Matrix::from_fn(t, n, |_, j| {
            rng.normal() * (1.0 + j as f64) + 0.5 * j as f64
        })
    }

    #[test]
    fn identical_rows_give_zero_covariance() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, -3.0], vec![1.0, 2.0, -3.0]]).unwrap();
        let c = sample_covariance(&x).unwrap();
        assert_eq!(c.mean, vec![1.0, 2.0, -3.0]);
        assert_eq!(c.matrix, SymmetricDense::zeros(3));
    }

    #[test]
    fn plus_minus_one_has_unit_variance() {
        let x = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let c = sample_covariance(&x).unwrap();
        assert_eq!(c.mean, vec![0.0]);
        assert_eq!(c.matrix.get(0, 0), 1.0);
    }

    #[test]
    fn rejects_single_sample() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(sample_covariance(&x).is_err());
        assert!(
            SampleCovariance::from_parts(SymmetricDense::identity(2), 1, vec![0.0; 2]).is_err()
        );
    }

    #[test]
    fn matches_naive_double_loop() {
        let (t, n) = (500, 5);
        let x = random_data(t, n, 3);
        let c = sample_covariance(&x).unwrap();
        // Naive oracle: explicit per-entry sums.
        for i in 0..n {
            for j in 0..n {
                let mi: f64 = (0..t).map(|r| x.get(r, i)).sum::<f64>() / t as f64;
                let mj: f64 = (0..t).map(|r| x.get(r, j)).sum::<f64>() / t as f64;
                let s: f64 = (0..t)
                    .map(|r| (x.get(r, i) - mi) * (x.get(r, j) - mj))
                    .sum::<f64>()
                    / t as f64;
                assert!(
                    (c.matrix.get(i, j) - s).abs() <= 1e-12 * s.abs().max(1.0),
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn hard_threshold_examples() {
        // t = 1 is below the estimator's minimum; thresholding only needs the scale.
        let c = SampleCovariance {
            t: 1,
            ..cov(&[vec![2.0, 0.1], vec![0.1, 2.0]], 2)
        };
        let out = hard_threshold(&c, &ThresholdSpec::hard(0.5)).unwrap();
        assert_eq!(out.nnz(), 2);
        assert_eq!(out.get(0, 0), 2.0);

        let tiny = hard_threshold(&c, &ThresholdSpec::hard(1e-300)).unwrap();
        assert_eq!(tiny.to_dense(), c.matrix);
    }

    #[test]
    fn hard_threshold_boundary_is_inclusive() {
        // tau / sqrt(t) = 1 / 2 exactly.
        let c = cov(
            &[
                vec![1.0, 0.5, 0.25],
                vec![0.5, 1.0, 0.0],
                vec![0.25, 0.0, 1.0],
            ],
            4,
        );
        let out = hard_threshold(&c, &ThresholdSpec::hard(1.0)).unwrap();
        assert_eq!(out.get(0, 1), 0.5);
        assert_eq!(out.get(0, 2), 0.0);
    }

    #[test]
    fn hard_threshold_without_diagonal_exemption() {
        let c = cov(&[vec![0.1, 0.9], vec![0.9, 2.0]], 4);
        let out =
            hard_threshold(&c, &ThresholdSpec::hard(1.0).with_preserve_diagonal(false)).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(1, 1), 2.0);
        assert_eq!(out.get(0, 1), 0.9);
    }

    #[test]
    fn soft_threshold_examples() {
        // cut = 0.6 / sqrt(4) = 0.3
        let c = cov(
            &[
                vec![1.0, 0.8, -0.8],
                vec![0.8, 1.0, 0.3],
                vec![-0.8, 0.3, 1.0],
            ],
            4,
        );
        let out = soft_threshold(&c, &ThresholdSpec::soft(0.6)).unwrap();
        assert!((out.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((out.get(0, 2) + 0.5).abs() < 1e-15);
        // exactly on the boundary: strict inequality drops it
        assert_eq!(out.get(1, 2), 0.0);
        assert_eq!(out.get(0, 0), 1.0);
        let raw =
            soft_threshold(&c, &ThresholdSpec::soft(0.6).with_preserve_diagonal(false)).unwrap();
        assert!((raw.get(0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let c = cov(&[vec![1.0]], 2);
        assert!(hard_threshold(&c, &ThresholdSpec::soft(1.0)).is_err());
        assert!(soft_threshold(&c, &ThresholdSpec::hard(1.0)).is_err());
        assert!(hard_threshold(&c, &ThresholdSpec::hard(-1.0)).is_err());
    }

    #[test]
    fn acv_examples() {
        let c = cov(
            &[
                vec![1.0, 0.3, -0.6],
                vec![0.3, 1.0, 0.6],
                vec![-0.6, 0.6, 1.0],
            ],
            10,
        );
        let p = acv_probabilities(&c.support()).unwrap();
        assert_eq!(p.get(0, 1), 0.5);
        assert_eq!(p.get(0, 2), 1.0);
        assert_eq!(p.get(1, 2), 1.0);
        assert_eq!(p.get(1, 1), 1.0);

        let eq = cov(&[vec![2.0, -0.4], vec![-0.4, 2.0]], 10);
        assert_eq!(acv_probabilities(&eq.support()).unwrap().get(0, 1), 1.0);

        let diag = cov(&[vec![2.0, 0.0], vec![0.0, 2.0]], 10);
        assert!(acv_probabilities(&diag.support()).is_err());
    }

    #[test]
    fn acv_max_entry_is_never_dropped() {
        let c = cov(
            &[
                vec![1.0, 0.9, 0.1],
                vec![0.9, 1.0, 0.2],
                vec![0.1, 0.2, 1.0],
            ],
            10,
        );
        let s = c.support();
        let p = acv_probabilities(&s).unwrap();
        let mut rng = RandomSource::new(5, 0);
        for _ in 0..2000 {
            let d = stochastic_sparsify(&s, &p, &mut rng).unwrap();
            assert_eq!(d.get(0, 1), 0.9);
        }
    }

    #[test]
    fn rcv_rank_assignment() {
        let c = cov(
            &[
                vec![1.0, 0.1, 0.5, -0.9],
                vec![0.1, 1.0, 0.2, 0.3],
                vec![0.5, 0.2, 1.0, 0.4],
                vec![-0.9, 0.3, 0.4, 1.0],
            ],
            10,
        );
        let s = c.support();
        let p = rcv_probabilities(&s, 0.5, &mut RandomSource::new(9, 0)).unwrap();
        let order = [(0, 1), (1, 2), (1, 3), (2, 3), (0, 2), (0, 3)];
        for w in order.windows(2) {
            assert!(p.get(w[0].0, w[0].1) <= p.get(w[1].0, w[1].1));
        }
        for i in 0..4 {
            assert_eq!(p.get(i, i), 1.0);
        }
        assert!(rcv_probabilities(&s, 0.0, &mut RandomSource::new(9, 0)).is_err());
        assert!(rcv_probabilities(&s, 1.0, &mut RandomSource::new(9, 0)).is_err());
    }

    #[test]
    fn rcv_ties_break_lexicographically() {
        let c = cov(
            &[
                vec![1.0, 0.5, 0.5],
                vec![0.5, 1.0, 0.5],
                vec![0.5, 0.5, 1.0],
            ],
            10,
        );
        let p = rcv_probabilities(&c.support(), 0.5, &mut RandomSource::new(1, 0)).unwrap();
        assert!(p.get(0, 1) <= p.get(0, 2));
        assert!(p.get(0, 2) <= p.get(1, 2));
    }

    #[test]
    fn rcv_mean_matches_target() {
        // CLT oracle: the mean of 100 * N' draws from N(p, sigma) lies within
        // 3 sigma / sqrt(100 N') of p (clipping at 3 sigma is negligible).
        let n = 8;
        let data = random_data(50, n, 2);
        let s = sample_covariance(&data).unwrap().support();
        let p = 0.3;
        let sigma = (p / 3.0_f64).min((1.0 - p) / 3.0);
        let n_pairs = n * (n - 1) / 2;
        let base = RandomSource::new(77, 0);
        let mut total = 0.0;
        for k in 0..100 {
            let probs = rcv_probabilities(&s, p, &mut base.fork(k)).unwrap();
            total += probs.mean_over(&s) * n_pairs as f64;
        }
        let mean = total / (100 * n_pairs) as f64;
        assert!(
            (mean - p).abs() <= 3.0 * sigma / ((100 * n_pairs) as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn sparsify_extremes() {
        let c = cov(
            &[
                vec![1.0, 0.4, 0.0],
                vec![0.4, 2.0, -0.3],
                vec![0.0, -0.3, 3.0],
            ],
            10,
        );
        let s = c.support();
        let mut rng = RandomSource::new(3, 3);
        let all = stochastic_sparsify(
            &s,
            &ProbabilityAssignment::uniform(3, 1.0).unwrap(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(all, s);
        let none = stochastic_sparsify(
            &s,
            &ProbabilityAssignment::uniform(3, 0.0).unwrap(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(none.to_dense(), SymmetricDense::diag(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn sparsify_half_keeps_half() {
        // Binomial oracle: 1000 draws x 15 pairs at p = 0.5.
        let data = random_data(40, 6, 4);
        let s = sample_covariance(&data).unwrap().support();
        let probs = ProbabilityAssignment::uniform(6, 0.5).unwrap();
        let mut rng = RandomSource::new(8, 1);
        let mut kept = 0usize;
        for _ in 0..1000 {
            let d = stochastic_sparsify(&s, &probs, &mut rng).unwrap();
            d.validate().unwrap();
            kept += (d.nnz() - 6) / 2;
        }
        let frac = kept as f64 / 15_000.0;
        assert!(
            (frac - 0.5).abs() <= 3.0 * (0.25 / 15_000.0_f64).sqrt(),
            "{frac}"
        );
    }

    #[test]
    fn threshold_probabilities_examples() {
        let c = cov(
            &[
                vec![1.0, 0.3, 0.01],
                vec![0.3, 1.0, -0.2],
                vec![0.01, -0.2, 1.0],
            ],
            4,
        );
        let p0 = threshold_as_probabilities(&c, 0.0).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| p0.get(i, j) == 1.0)));
        let pinf = threshold_as_probabilities(&c, 1e300).unwrap();
        assert_eq!(pinf.get(0, 1), 0.0);
        assert_eq!(pinf.get(2, 2), 1.0);
    }

    #[test]
    fn expected_nnz_examples() {
        let dense = to_sparse(&SymmetricDense::from_fn(10, |i, j| 1.0 + (i * j) as f64));
        assert_eq!(
            expected_nnz(&ProbabilityAssignment::uniform(10, 1.0).unwrap(), &dense).unwrap(),
            100.0
        );
        assert_eq!(
            expected_nnz(&ProbabilityAssignment::uniform(10, 0.0).unwrap(), &dense).unwrap(),
            10.0
        );
        assert_eq!(
            expected_nnz(&ProbabilityAssignment::uniform(10, 0.25).unwrap(), &dense).unwrap(),
            32.5
        );
        assert_eq!(
            expected_nnz(&ProbabilityAssignment::uniform(10, 0.5).unwrap(), &dense).unwrap(),
            55.0
        );
    }

    #[test]
    fn psd_check_examples() {
        let id = cov(&[vec![1.0, 0.0], vec![0.0, 1.0]], 10);
        let r = psd_sufficient_check(&id.support(), &id).unwrap();
        assert_eq!(r.epsilon_gap, 0.0);
        assert!(r.satisfied);

        // C' = I + 0.5 (e1 e2^T + e2 e1^T), sparse = I: eps = 0.5, lambda_min = 0.5
        let cp = cov(&[vec![1.0, 0.5], vec![0.5, 1.0]], 10);
        let r = psd_sufficient_check(&to_sparse(&SymmetricDense::identity(2)), &cp).unwrap();
        assert!((r.epsilon_gap - 0.5).abs() < 1e-14);
        assert!((r.lambda_min - 0.5).abs() < 1e-14);
        assert!(!r.satisfied);
    }

    #[test]
    fn psd_check_on_spd_matrix_with_small_cut() {
        let n = 6;
        let mut rng = RandomSource::new(21, 0);
        let off: Vec<f64> = (0..n * n).map(|_| 0.05 * rng.normal()).collect();
        let a = SymmetricDense::from_fn(n, |i, j| if i == j { 3.0 } else { off[i * n + j] });
        let c = SampleCovariance::from_parts(a, 100, vec![0.0; n]).unwrap();
        let thr = hard_threshold(&c, &ThresholdSpec::hard(0.2)).unwrap();
        let r = psd_sufficient_check(&thr, &c).unwrap();
        assert!(r.lambda_min > 2.0, "{}", r.lambda_min);
        assert!(r.epsilon_gap < 0.1, "{}", r.epsilon_gap);
        assert!(r.satisfied);
        assert!(sym_eig(&thr.to_dense()).unwrap().min_eigenvalue() >= 0.0);
    }
}
