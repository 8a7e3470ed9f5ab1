//! Polynomial covariance filters `u = sum_k h_k C^k x`, their stochastic
//! counterpart over independent sparsified realizations, and the spectral
//! quantities used to reason about stability: frequency responses (uni- and
//! multivariate), Lipschitz constants and the Lipschitz gradient.

use serde::{Deserialize, Serialize};

use crate::covariance::{stochastic_sparsify, ProbabilityAssignment};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm2, RandomSource, SymmetricOperator, SymmetricSparse};

/// Gaps below this are treated as coincident eigenvalues when estimating a
/// Lipschitz constant.
pub const MIN_EIGEN_GAP: f64 = 1e-12;

/// Filter coefficients `h_0..h_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTaps(Vec<f64>);

impl FilterTaps {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a filter needs at least one tap"));
        }
        if let Some(k) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self(coeffs))
    }

    /// Filter order `K`.
    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }
}

/// Independent sparsified realizations `C~_1..C~_K`; `C~_0 = I` is implicit.
#[derive(Debug, Clone)]
pub struct RealizationSequence {
    mats: Vec<SymmetricSparse>,
}

impl RealizationSequence {
    pub fn new(mats: Vec<SymmetricSparse>) -> Result<Self> {
        if let Some(first) = mats.first() {
            for m in &mats {
                check_dim(first.n(), m.n())?;
            }
        }
        Ok(Self { mats })
    }

    /// Draw `len` i.i.d. realizations of `Delta (.) C`.
    pub fn draw(
        support: &SymmetricSparse,
        probs: &ProbabilityAssignment,
        len: usize,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        let mats = (0..len)
            .map(|_| stochastic_sparsify(support, probs, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mats })
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn get(&self, k: usize) -> &SymmetricSparse {
        &self.mats[k]
    }
}

/// `u = sum_k h_k shift_k(...shift_1(x))`, the shared kernel of the
/// deterministic and stochastic filters. Never forms a matrix power.
fn accumulate_shifts<'a>(
    h: &FilterTaps,
    x: &[f64],
    cols: usize,
    mut shift: impl FnMut(usize) -> &'a dyn SymmetricOperator,
) -> Vec<f64> {
    let coeffs = h.coeffs();
    let mut u: Vec<f64> = x.iter().map(|v| coeffs[0] * v).collect();
    let mut z = x.to_vec();
    let mut next = vec![0.0; x.len()];
    for (k, &hk) in coeffs.iter().enumerate().skip(1) {
        let op = shift(k);
        if cols == 1 {
            op.apply_into(&z, &mut next);
        } else {
            op.apply_block_into(&z, cols, &mut next);
        }
        std::mem::swap(&mut z, &mut next);
        for (ui, zi) in u.iter_mut().zip(&z) {
            *ui += hk * zi;
        }
    }
    u
}

/// `u = sum_{k=0}^{K} h_k C^k x` by iterated matrix-vector products,
/// `O(K nnz)` for sparse `C` and `O(K n^2)` for dense.
pub fn apply_filter(h: &FilterTaps, c: &dyn SymmetricOperator, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(c.dim(), x.len())?;
    Ok(accumulate_shifts(h, x, 1, |_| c))
}

/// Filter every column of a row-major `n x cols` block.
pub fn apply_filter_block(
    h: &FilterTaps,
    c: &dyn SymmetricOperator,
    x: &[f64],
    cols: usize,
) -> Result<Vec<f64>> {
    check_dim(c.dim() * cols, x.len())?;
    Ok(accumulate_shifts(h, x, cols, |_| c))
}

/// Stochastic filter `u = sum_k h_k C~_k ... C~_1 x`: shift `k` uses
/// realization `k` and partial products are reused.
pub fn apply_stochastic_filter(
    h: &FilterTaps,
    seq: &RealizationSequence,
    x: &[f64],
) -> Result<Vec<f64>> {
    if seq.len() < h.order() {
        return Err(Error::invalid(format!(
            "filter of order {} needs {} realizations, got {}",
            h.order(),
            h.order(),
            seq.len()
        )));
    }
    if let Some(first) = seq.mats.first() {
        check_dim(first.n(), x.len())?;
    }
    Ok(accumulate_shifts(h, x, 1, |k| &seq.mats[k - 1]))
}

/// `h(lambda) = sum_k h_k lambda^k` at each point.
///
/// Powers are accumulated left to right, the same operation order as
/// [`generalized_frequency_response`], so the multivariate response with all
/// coordinates equal reproduces this value bit-for-bit.
pub fn frequency_response(h: &FilterTaps, lambdas: &[f64]) -> Vec<f64> {
    lambdas.iter().map(|&l| power_sum(h.coeffs(), l)).collect()
}

fn power_sum(coeffs: &[f64], l: f64) -> f64 {
    let mut prod = 1.0;
    let mut out = coeffs[0];
    for hk in &coeffs[1..] {
        prod *= l;
        out += hk * prod;
    }
    out
}

/// Multivariate response `sum_k h_k prod_{m<=k} lambda_m` with
/// `lambda_0 = 1`; `lambda` holds `lambda_1..lambda_K`.
pub fn generalized_frequency_response(h: &FilterTaps, lambda: &[f64]) -> Result<f64> {
    check_dim(h.order(), lambda.len())?;
    let coeffs = h.coeffs();
    let mut prod = 1.0;
    let mut out = coeffs[0];
    for (hk, l) in coeffs[1..].iter().zip(lambda) {
        prod *= l;
        out += hk * prod;
    }
    Ok(out)
}

/// `d h / d lambda_k` at `lambda` (`k` is 1-based).
fn partial(coeffs: &[f64], lambda: &[f64], k: usize) -> f64 {
    // h is affine in lambda_k: sum over m >= k of h_m prod_{j<=m, j!=k} lambda_j.
    let prefix: f64 = lambda[..k - 1].iter().product();
    let mut acc = 0.0;
    let mut tail = 1.0;
    for m in k..coeffs.len() {
        if m > k {
            tail *= lambda[m - 1];
        }
        acc += coeffs[m] * tail;
    }
    prefix * acc
}

/// Lipschitz gradient between `lambda1` and `lambda2`: entry `k` is the
/// partial derivative in `lambda_k` at the splice
/// `[lambda2_1..lambda2_k, lambda1_{k+1}..lambda1_K]`.
///
/// Satisfies `h(lambda2) - h(lambda1) = grad . (lambda2 - lambda1)` exactly
/// (up to rounding).
pub fn lipschitz_gradient(h: &FilterTaps, lambda1: &[f64], lambda2: &[f64]) -> Result<Vec<f64>> {
    let k_max = h.order();
    check_dim(k_max, lambda1.len())?;
    check_dim(k_max, lambda2.len())?;
    let mut spliced = lambda1.to_vec();
    let mut grad = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        spliced[k - 1] = lambda2[k - 1];
        grad.push(partial(h.coeffs(), &spliced, k));
    }
    Ok(grad)
}

/// Smallest `P` with `|h(a) - h(b)| <= P |a - b|` over all pairs of the given
/// eigenvalues. Pairs closer than [`MIN_EIGEN_GAP`] are skipped.
pub fn empirical_lipschitz_constant(h: &FilterTaps, lambdas: &[f64]) -> Result<f64> {
    let mut pts: Vec<f64> = lambdas.to_vec();
    pts.sort_by(f64::total_cmp);
    let resp = frequency_response(h, &pts);
    let mut best: Option<f64> = None;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let gap = pts[j] - pts[i];
            if gap < MIN_EIGEN_GAP {
                continue;
            }
            let r = (resp[j] - resp[i]).abs() / gap;
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best.ok_or_else(|| {
        Error::invalid("need at least two distinct eigenvalues to estimate a Lipschitz constant")
    })
}

/// Generalized integral Lipschitz test at one pair of frequency vectors:
/// `||grad||_2 <= P` and `||lambda1 (.) grad||_2 <= P`.
pub fn generalized_lipschitz_check(
    h: &FilterTaps,
    lambda1: &[f64],
    lambda2: &[f64],
    p: f64,
) -> Result<bool> {
    if p.is_nan() || p < 0.0 {
        return Err(Error::invalid(format!("P must be non-negative, got {p}")));
    }
    let (g, weighted) = generalized_lipschitz_norms(h, lambda1, lambda2)?;
    Ok(g <= p && weighted <= p)
}

/// `(||grad||_2, ||lambda1 (.) grad||_2)` for the Lipschitz gradient.
pub fn generalized_lipschitz_norms(
    h: &FilterTaps,
    lambda1: &[f64],
    lambda2: &[f64],
) -> Result<(f64, f64)> {
    let grad = lipschitz_gradient(h, lambda1, lambda2)?;
    let weighted: Vec<f64> = grad.iter().zip(lambda1).map(|(g, l)| g * l).collect();
    Ok((norm2(&grad), norm2(&weighted)))
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, to_sparse, SymmetricDense};
    use proptest::prelude::*;

    fn taps(v: &[f64]) -> FilterTaps {
        FilterTaps::new(v.to_vec()).unwrap()
    }

    fn random_matrix(n: usize, seed: u64) -> SymmetricDense {
        let mut rng = RandomSource::new(seed, 0);
        let vals: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
        SymmetricDense::from_fn(n, |i, j| vals[i * n + j] / n as f64)
    }

    #[test]
    fn taps_validation() {
        assert!(FilterTaps::new(vec![]).is_err());
        assert!(FilterTaps::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(taps(&[1.0, 2.0, 3.0]).order(), 2);
    }

    #[test]
    fn zeroth_order_is_identity() {
        let c = random_matrix(4, 1);
        let x = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(apply_filter(&taps(&[1.0]), &c, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn identity_shift_sums_taps() {
        let c = SymmetricDense::identity(3);
        let x = [1.0, 2.0, -1.0];
        let u = apply_filter(&taps(&[0.5, 1.5, -0.25]), &c, &x).unwrap();
        for (ui, xi) in u.iter().zip(&x) {
            assert!((ui - 1.75 * xi).abs() < 1e-15);
        }
    }

    #[test]
    fn first_order_is_one_matvec() {
        let c = SymmetricDense::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(
            apply_filter(&taps(&[0.0, 1.0]), &c, &[1.0, 1.0]).unwrap(),
            vec![3.0, 4.0]
        );
        assert!(apply_filter(&taps(&[0.0, 1.0]), &c, &[1.0]).is_err());
    }

    #[test]
    fn sparse_and_dense_agree() {
        let c = random_matrix(7, 2);
        let s = to_sparse(&c);
        let x: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        let h = taps(&[0.3, -1.0, 0.7, 0.2]);
        let a = apply_filter(&h, &c, &x).unwrap();
        let b = apply_filter(&h, &s, &x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn stochastic_collapses_to_deterministic() {
        let c = random_matrix(5, 3);
        let s = to_sparse(&c);
        let h = taps(&[0.1, 0.4, -0.3]);
        let seq = RealizationSequence::new(vec![s.clone(), s.clone()]).unwrap();
        let x = [1.0, 0.0, -1.0, 2.0, 0.5];
        assert_eq!(
            apply_stochastic_filter(&h, &seq, &x).unwrap(),
            apply_filter(&h, &s, &x).unwrap()
        );
        let short = RealizationSequence::new(vec![s]).unwrap();
        assert!(apply_stochastic_filter(&h, &short, &x).is_err());
    }

    #[test]
    fn stochastic_first_order() {
        let c1 = to_sparse(&random_matrix(4, 5));
        let h = taps(&[0.7, -1.2]);
        let x = [0.2, 0.4, -0.6, 1.0];
        let u =
            apply_stochastic_filter(&h, &RealizationSequence::new(vec![c1.clone()]).unwrap(), &x)
                .unwrap();
        let cx = c1.matvec(&x).unwrap();
        for i in 0..4 {
            assert!((u[i] - (0.7 * x[i] - 1.2 * cx[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn stochastic_second_order_matches_explicit_product() {
        let a = random_matrix(5, 6);
        let b = random_matrix(5, 7);
        let h = taps(&[0.5, -0.25, 2.0]);
        let x = [1.0, 2.0, 3.0, -1.0, 0.0];
        // Dense oracle: form B * A explicitly.
        let mut ba = [0.0; 25];
        for i in 0..5 {
            for j in 0..5 {
                ba[i * 5 + j] = (0..5).map(|k| b.get(i, k) * a.get(k, j)).sum();
            }
        }
        let ax = a.matvec(&x).unwrap();
        let expect: Vec<f64> = (0..5)
            .map(|i| {
                0.5 * x[i] - 0.25 * ax[i] + 2.0 * (0..5).map(|j| ba[i * 5 + j] * x[j]).sum::<f64>()
            })
            .collect();
        let seq = RealizationSequence::new(vec![to_sparse(&a), to_sparse(&b)]).unwrap();
        let u = apply_stochastic_filter(&h, &seq, &x).unwrap();
        for (p, q) in u.iter().zip(&expect) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn frequency_response_examples() {
        assert_eq!(frequency_response(&taps(&[1.0, 1.0]), &[2.0]), vec![3.0]);
        assert_eq!(
            frequency_response(&taps(&[0.0, 0.0, 0.0, 1.0]), &[2.0]),
            vec![8.0]
        );
    }

    #[test]
    fn eigenvectors_are_scaled_by_the_response() {
        let c = random_matrix(8, 9);
        let eig = sym_eig(&c).unwrap();
        let h = taps(&[0.2, 1.0, -0.5, 0.3]);
        for k in 0..8 {
            let v = eig.vector(k);
            let u = apply_filter(&h, &c, &v).unwrap();
            let hl = frequency_response(&h, &[eig.eigenvalues[k]])[0];
            for (ui, vi) in u.iter().zip(&v) {
                assert!((ui - hl * vi).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn generalized_response_examples() {
        assert_eq!(
            generalized_frequency_response(&taps(&[1.0, 1.0, 1.0]), &[2.0, 3.0]).unwrap(),
            9.0
        );
        assert_eq!(
            generalized_frequency_response(&taps(&[4.0, 5.0, 6.0]), &[0.0, 7.0]).unwrap(),
            4.0
        );
        assert!(generalized_frequency_response(&taps(&[1.0, 1.0]), &[1.0, 2.0]).is_err());
        let h = taps(&[0.3, -1.0, 0.25, 2.0]);
        let l = 1.7;
        assert_eq!(
            generalized_frequency_response(&h, &[l, l, l]).unwrap(),
            frequency_response(&h, &[l])[0]
        );
        let direct = 0.3 - l + 0.25 * l * l + 2.0 * l * l * l;
        assert!((frequency_response(&h, &[l])[0] - direct).abs() < 1e-13);
    }

    #[test]
    fn lipschitz_gradient_examples() {
        let h = taps(&[0.4, -2.5]);
        assert_eq!(lipschitz_gradient(&h, &[1.0], &[3.0]).unwrap(), vec![-2.5]);
        let h3 = taps(&[1.0, 2.0, 3.0, 4.0]);
        let l = [0.5, -1.0, 2.0];
        let g = lipschitz_gradient(&h3, &l, &l).unwrap();
        assert_eq!(g.len(), 3);
        assert!(lipschitz_gradient(&h3, &l, &[1.0]).is_err());
    }

    #[test]
    fn lipschitz_constant_examples() {
        let grid = [0.0, 0.5, 1.3, 2.0];
        assert!(
            (empirical_lipschitz_constant(&taps(&[0.0, -3.0]), &grid).unwrap() - 3.0).abs() < 1e-14
        );
        assert_eq!(
            empirical_lipschitz_constant(&taps(&[2.0]), &grid).unwrap(),
            0.0
        );
        assert_eq!(
            empirical_lipschitz_constant(&taps(&[0.0, 0.0, 1.0]), &[0.0, 1.0, 2.0]).unwrap(),
            3.0
        );
        assert!(empirical_lipschitz_constant(&taps(&[0.0, 1.0]), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn generalized_lipschitz_examples() {
        assert!(generalized_lipschitz_check(
            &taps(&[0.0, 0.0, 0.0]),
            &[1.0, 2.0],
            &[3.0, 4.0],
            0.0
        )
        .unwrap());
        let h = taps(&[0.0, 1.0]);
        assert!(!generalized_lipschitz_check(&h, &[2.0], &[5.0], 1.9).unwrap());
        assert!(generalized_lipschitz_check(&h, &[2.0], &[5.0], 2.0).unwrap());
    }

    #[test]
    fn generalized_lipschitz_grid_constant_passes() {
        let h = taps(&[0.1, 0.8, -0.3]);
        let grid = linspace(-1.0, 1.0, 7);
        let mut pairs = Vec::new();
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    pairs.push(([a, b], [c, a]));
                }
            }
        }
        let p = pairs
            .iter()
            .map(|(l1, l2)| {
                let (g, w) = generalized_lipschitz_norms(&h, l1, l2).unwrap();
                g.max(w)
            })
            .fold(0.0, f64::max);
        assert!(pairs
            .iter()
            .all(|(l1, l2)| generalized_lipschitz_check(&h, l1, l2, p).unwrap()));
    }

    proptest! {
        #[test]
        fn filter_is_linear(
            coeffs in prop::collection::vec(-2.0f64..2.0, 1..4),
            x in prop::collection::vec(-1.0f64..1.0, 6),
            y in prop::collection::vec(-1.0f64..1.0, 6),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            seed in 0u64..1000,
        ) {
            let c = random_matrix(6, seed);
            let h = FilterTaps::new(coeffs).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = apply_filter(&h, &c, &mix).unwrap();
            let ux = apply_filter(&h, &c, &x).unwrap();
            let uy = apply_filter(&h, &c, &y).unwrap();
            for i in 0..6 {
                let rhs = alpha * ux[i] + beta * uy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn gradient_identity_holds(
            coeffs in prop::collection::vec(-2.0f64..2.0, 2..6),
            seed in 0u64..10_000,
        ) {
            let h = FilterTaps::new(coeffs).unwrap();
            let k = h.order();
            let mut rng = RandomSource::new(seed, 1);
            let l1: Vec<f64> = (0..k).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let l2: Vec<f64> = (0..k).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let g = lipschitz_gradient(&h, &l1, &l2).unwrap();
            let lhs = generalized_frequency_response(&h, &l2).unwrap() - generalized_frequency_response(&h, &l1).unwrap();
            let rhs: f64 = g.iter().zip(l2.iter().zip(&l1)).map(|(gi, (a, b))| gi * (a - b)).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }
}
