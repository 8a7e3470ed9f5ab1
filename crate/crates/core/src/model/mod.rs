//! coVariance Neural Networks.
//!
//! A model stacks `L` filter-bank layers
//! `u_f = sigma(sum_g H_fg(C) u_g)` over node features, averages the last
//! layer over nodes, and feeds the result through a two-layer perceptron.
//! All trainable parameters live in one flat vector so the optimizer,
//! checkpoints and finite-difference checks treat them uniformly.

mod backward;
mod train;

pub use backward::{backward, loss, Gradients, Target};
pub use train::{evaluate, train, Adam, EpochRecord, TrainedModel, TrainingConfig, TrainingSet};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::filter::FilterTaps;
use crate::linalg::{Matrix, RandomSource, SymmetricOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
        }
    }

    /// Derivative given the pre-activation `a` and output `u`; the ReLU
    /// subgradient at 0 is 0.
    #[inline]
    fn derivative(self, a: f64, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - u * u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

impl Task {
    pub fn outputs(&self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Classification { classes } => *classes,
        }
    }
}

/// Shape of a VNN: input features per node, the width of each filter-bank
/// layer, the shared filter order, and the readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_features: usize,
    pub layer_widths: Vec<usize>,
    pub order: usize,
    pub readout_hidden: usize,
    pub activation: Activation,
    pub task: Task,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_features == 0
            || self.layer_widths.is_empty()
            || self.layer_widths.contains(&0)
        {
            return Err(Error::invalid(
                "feature counts must be positive and there must be at least one layer",
            ));
        }
        if self.readout_hidden == 0 || self.task.outputs() == 0 {
            return Err(Error::invalid("readout widths must be positive"));
        }
        if let Task::Classification { classes } = self.task {
            if classes < 2 {
                return Err(Error::invalid("classification needs at least 2 classes"));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<VNNLayer> {
        let mut f_in = self.input_features;
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.layer_widths.len());
        for &f_out in &self.layer_widths {
            let layer = VNNLayer {
                f_in,
                f_out,
                order: self.order,
                offset,
            };
            offset += layer.num_params();
            f_in = f_out;
            out.push(layer);
        }
        out
    }

    fn readout_layout(&self) -> ReadoutLayout {
        let taps: usize = self.layers().iter().map(VNNLayer::num_params).sum();
        let f_last = *self.layer_widths.last().expect("validated");
        let hidden = self.readout_hidden;
        let outputs = self.task.outputs();
        let w1 = taps;
        let b1 = w1 + hidden * f_last;
        let w2 = b1 + hidden;
        let b2 = w2 + outputs * hidden;
        ReadoutLayout {
            f_last,
            hidden,
            outputs,
            w1,
            b1,
            w2,
            b2,
            end: b2 + outputs,
        }
    }

    pub fn num_params(&self) -> usize {
        self.readout_layout().end
    }
}

/// One filter-bank layer: an `F_out x F_in` grid of order-`K` filters.
///
/// Taps are stored as `K + 1` matrices `H_k` of shape `F_in x F_out` so that
/// the layer computes `A = sum_k (C^k U) H_k` on the row-major node-feature
/// block `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VNNLayer {
    pub f_in: usize,
    pub f_out: usize,
    pub order: usize,
    offset: usize,
}

impl VNNLayer {
    pub fn num_params(&self) -> usize {
        (self.order + 1) * self.f_in * self.f_out
    }

    #[inline]
    fn tap_index(&self, k: usize, g: usize, f: usize) -> usize {
        self.offset + (k * self.f_in + g) * self.f_out + f
    }

    fn taps<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.num_params()]
    }
}

#[derive(Debug, Clone, Copy)]
struct ReadoutLayout {
    f_last: usize,
    hidden: usize,
    outputs: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

/// Apply one layer to the `n x F_in` block `u_in`, returning the
/// `n x F_out` post-activation block.
pub fn layer_forward(
    layer: &VNNLayer,
    taps: &[f64],
    c: &dyn SymmetricOperator,
    u_in: &[f64],
    activation: Activation,
) -> Result<Vec<f64>> {
    check_dim(layer.num_params(), taps.len())?;
    check_dim(c.dim() * layer.f_in, u_in.len())?;
    let shifted = shift_powers(c, u_in, layer.f_in, layer.order);
    let local = VNNLayer {
        offset: 0,
        ..*layer
    };
    let pre = mix_features(&local, taps, &shifted, c.dim());
    Ok(pre.into_iter().map(|a| activation.apply(a)).collect())
}

/// `[U, C U, ..., C^K U]`
fn shift_powers(c: &dyn SymmetricOperator, u: &[f64], cols: usize, order: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(order + 1);
    out.push(u.to_vec());
    for k in 1..=order {
        let mut next = vec![0.0; u.len()];
        c.apply_block_into(&out[k - 1], cols, &mut next);
        out.push(next);
    }
    out
}

/// `A = sum_k Z_k H_k`
fn mix_features(layer: &VNNLayer, params: &[f64], shifted: &[Vec<f64>], n: usize) -> Vec<f64> {
    let (f_in, f_out) = (layer.f_in, layer.f_out);
    let mut pre = vec![0.0; n * f_out];
    for (k, z) in shifted.iter().enumerate() {
        for i in 0..n {
            let zrow = &z[i * f_in..(i + 1) * f_in];
            let arow = &mut pre[i * f_out..(i + 1) * f_out];
            for (g, &zig) in zrow.iter().enumerate() {
                if zig == 0.0 {
                    continue;
                }
                let h = &params[layer.tap_index(k, g, 0)..layer.tap_index(k, g, 0) + f_out];
                for (a, hv) in arow.iter_mut().zip(h) {
                    *a += zig * hv;
                }
            }
        }
    }
    pre
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    /// Per layer: `[U_{l-1}, C U_{l-1}, ..., C^K U_{l-1}]`.
    shifted: Vec<Vec<Vec<f64>>>,
    /// Per layer pre-activations `A_l`.
    pre: Vec<Vec<f64>>,
    /// Per layer outputs `U_l`.
    post: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    /// Raw readout outputs (before the regression target affine map).
    raw: Vec<f64>,
}

/// VNN with all parameters in one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VNNModel {
    pub arch: Architecture,
    params: Vec<f64>,
    /// Regression outputs are `target_offset + target_scale * raw`; fixed
    /// (not trained). Identity for a fresh model.
    pub target_offset: f64,
    pub target_scale: f64,
}

impl VNNModel {
    /// Random initialization: taps uniform on `+-1/sqrt(F_in (K+1))`,
    /// readout weights and biases uniform on `+-1/sqrt(fan_in)`.
    pub fn init(arch: Architecture, rng: &mut RandomSource) -> Result<Self> {
        arch.validate()?;
        let mut params = vec![0.0; arch.num_params()];
        for layer in arch.layers() {
            let bound = 1.0 / ((layer.f_in * (layer.order + 1)) as f64).sqrt();
            for p in &mut params[layer.offset..layer.offset + layer.num_params()] {
                *p = rng.uniform_range(-bound, bound);
            }
        }
        let r = arch.readout_layout();
        let b1 = 1.0 / (r.f_last as f64).sqrt();
        for p in &mut params[r.w1..r.w2] {
            *p = rng.uniform_range(-b1, b1);
        }
        let b2 = 1.0 / (r.hidden as f64).sqrt();
        for p in &mut params[r.w2..r.end] {
            *p = rng.uniform_range(-b2, b2);
        }
        Ok(Self {
            arch,
            params,
            target_offset: 0.0,
            target_scale: 1.0,
        })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        check_dim(arch.num_params(), params.len())?;
        Ok(Self {
            arch,
            params,
            target_offset: 0.0,
            target_scale: 1.0,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layers(&self) -> Vec<VNNLayer> {
        self.arch.layers()
    }

    /// The filter from input feature `g` to output feature `f` of layer `l`.
    pub fn filter(&self, l: usize, f: usize, g: usize) -> FilterTaps {
        let layer = self.layers()[l];
        let coeffs = (0..=layer.order)
            .map(|k| self.params[layer.tap_index(k, g, f)])
            .collect();
        FilterTaps::new(coeffs).expect("finite parameters")
    }

    /// Every filter in every layer.
    pub fn filters(&self) -> Vec<FilterTaps> {
        let mut out = Vec::new();
        for (l, layer) in self.layers().iter().enumerate() {
            for f in 0..layer.f_out {
                for g in 0..layer.f_in {
                    out.push(self.filter(l, f, g));
                }
            }
        }
        out
    }

    /// Set readout to pass pooled features straight through: `W1 = I`,
    /// `W2 = I`, zero biases. Needs `hidden == F_L == outputs`.
    pub fn set_identity_readout(&mut self) -> Result<()> {
        let r = self.arch.readout_layout();
        if r.hidden != r.f_last || r.outputs != r.hidden {
            return Err(Error::invalid(
                "identity readout needs hidden == F_L == outputs",
            ));
        }
        self.params[r.w1..r.end].fill(0.0);
        for i in 0..r.hidden {
            self.params[r.w1 + i * r.f_last + i] = 1.0;
            self.params[r.w2 + i * r.hidden + i] = 1.0;
        }
        Ok(())
    }

    fn check_input(&self, c: &dyn SymmetricOperator, x: &[f64]) -> Result<()> {
        check_dim(c.dim() * self.arch.input_features, x.len())
    }

    /// Last-layer node features `Phi(x, C)`, row-major `n x F_L`.
    pub fn embed(&self, c: &dyn SymmetricOperator, x: &[f64]) -> Result<Matrix> {
        self.check_input(c, x)?;
        let n = c.dim();
        let mut u = x.to_vec();
        for layer in self.layers() {
            u = layer_forward(
                &layer,
                layer.taps(&self.params),
                c,
                &u,
                self.arch.activation,
            )?;
        }
        Matrix::from_vec(n, *self.arch.layer_widths.last().expect("validated"), u)
    }

    /// Model output for one sample: a 1-vector for regression, logits for
    /// classification.
    pub fn forward(&self, c: &dyn SymmetricOperator, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(c, x)?;
        let cache = self.forward_cached(c, x);
        Ok(self.finish(&cache.raw))
    }

    fn finish(&self, raw: &[f64]) -> Vec<f64> {
        match self.arch.task {
            Task::Regression => vec![self.target_offset + self.target_scale * raw[0]],
            Task::Classification { .. } => raw.to_vec(),
        }
    }

    pub(crate) fn forward_cached(&self, c: &dyn SymmetricOperator, x: &[f64]) -> ForwardCache {
        let n = c.dim();
        let act = self.arch.activation;
        let layers = self.layers();
        let mut shifted_all = Vec::with_capacity(layers.len());
        let mut pre_all = Vec::with_capacity(layers.len());
        let mut post_all: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        for layer in &layers {
            let input = post_all.last().map_or(x, |v| v.as_slice());
            let shifted = shift_powers(c, input, layer.f_in, layer.order);
            let pre = mix_features(layer, &self.params, &shifted, n);
            let post: Vec<f64> = pre.iter().map(|&a| act.apply(a)).collect();
            shifted_all.push(shifted);
            pre_all.push(pre);
            post_all.push(post);
        }
        let r = self.arch.readout_layout();
        let last = post_all.last().expect("at least one layer");
        let mut pooled = vec![0.0; r.f_last];
        for row in last.chunks_exact(r.f_last) {
            for (p, v) in pooled.iter_mut().zip(row) {
                *p += v;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= n as f64);

        let w1 = &self.params[r.w1..r.b1];
        let b1 = &self.params[r.b1..r.w2];
        let hidden_pre: Vec<f64> = (0..r.hidden)
            .map(|h| b1[h] + crate::linalg::dot(&w1[h * r.f_last..(h + 1) * r.f_last], &pooled))
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|a| a.max(0.0)).collect();
        let w2 = &self.params[r.w2..r.b2];
        let b2 = &self.params[r.b2..r.end];
        let raw: Vec<f64> = (0..r.outputs)
            .map(|o| b2[o] + crate::linalg::dot(&w2[o * r.hidden..(o + 1) * r.hidden], &hidden))
            .collect();
        ForwardCache {
            shifted: shifted_all,
            pre: pre_all,
            post: post_all,
            pooled,
            hidden_pre,
            hidden,
            raw,
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::{to_sparse, SymmetricDense};

    pub(crate) fn arch(
        f0: usize,
        widths: &[usize],
        order: usize,
        hidden: usize,
        task: Task,
    ) -> Architecture {
        Architecture {
            input_features: f0,
            layer_widths: widths.to_vec(),
            order,
            readout_hidden: hidden,
            activation: Activation::Relu,
            task,
        }
    }

    pub(crate) fn random_cov(n: usize, seed: u64) -> SymmetricDense {
        let mut rng = RandomSource::new(seed, 99);
        let v: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
        SymmetricDense::from_fn(n, |i, j| {
            if i == j {
                1.0
            } else {
                0.3 * v[i * n + j] / (n as f64).sqrt()
            }
        })
    }

    fn single_layer(f_in: usize, f_out: usize, taps: Vec<f64>) -> VNNModel {
        let a = arch(
            f_in,
            &[f_out],
            taps.len() / (f_in * f_out) - 1,
            f_out,
            Task::Regression,
        );
        let mut params = taps;
        params.resize(a.num_params(), 0.0);
        VNNModel::from_params(a, params).unwrap()
    }

    #[test]
    fn identity_tap_layer_passes_non_negative_input() {
        let layer = VNNLayer {
            f_in: 1,
            f_out: 1,
            order: 0,
            offset: 0,
        };
        let c = random_cov(5, 1);
        let x = [0.0, 1.0, 2.5, 0.3, 4.0];
        assert_eq!(
            layer_forward(&layer, &[1.0], &c, &x, Activation::Relu).unwrap(),
            x.to_vec()
        );
        assert_eq!(
            layer_forward(&layer, &[0.0], &c, &x, Activation::Relu).unwrap(),
            vec![0.0; 5]
        );
        assert!(layer_forward(&layer, &[1.0, 2.0], &c, &x, Activation::Relu).is_err());
    }

    #[test]
    fn two_inputs_through_identity_matrix() {
        // K = 1, F_in = 2, F_out = 1. H_k is F_in x F_out: taps[(k, g)].
        let h1 = [0.5, -0.2]; // filter on feature 0: h_0, h_1
        let h2 = [0.3, 0.9]; // filter on feature 1
        let layer = VNNLayer {
            f_in: 2,
            f_out: 1,
            order: 1,
            offset: 0,
        };
        let taps = [h1[0], h2[0], h1[1], h2[1]];
        let c = SymmetricDense::identity(3);
        let u = [1.0, -2.0, 0.5, 0.5, -1.0, 3.0]; // rows (u1_i, u2_i)
        let out = layer_forward(&layer, &taps, &c, &u, Activation::Relu).unwrap();
        for i in 0..3 {
            let expect = ((h1[0] + h1[1]) * u[2 * i] + (h2[0] + h2[1]) * u[2 * i + 1]).max(0.0);
            assert!((out[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut m = VNNModel::init(
            arch(1, &[3, 2], 2, 4, Task::Regression),
            &mut RandomSource::new(1, 0),
        )
        .unwrap();
        let r = m.arch.readout_layout();
        m.params_mut()[r.b1..r.w2].fill(0.0);
        m.params_mut()[r.b2..r.end].fill(0.0);
        let c = random_cov(6, 2);
        assert_eq!(m.forward(&c, &[0.0; 6]).unwrap(), vec![0.0]);
    }

    #[test]
    fn identity_model_is_node_mean_of_relu() {
        let mut m = single_layer(1, 1, vec![1.0]);
        m.set_identity_readout().unwrap();
        let c = random_cov(4, 3);
        let x = [1.0, -2.0, 3.0, 0.5];
        let out = m.forward(&c, &x).unwrap();
        assert!((out[0] - (1.0 + 3.0 + 0.5) / 4.0).abs() < 1e-15);
    }

    /// Straight-line re-implementation: dense matrix powers, explicit loops.
    #[allow(clippy::needless_range_loop)]
    fn reference_forward(m: &VNNModel, c: &SymmetricDense, x: &[f64]) -> Vec<f64> {
        let n = c.n();
        let mut u: Vec<Vec<f64>> = (0..m.arch.input_features)
            .map(|g| (0..n).map(|i| x[i * m.arch.input_features + g]).collect())
            .collect();
        let pow = |v: &Vec<f64>, k: usize| {
            let mut z = v.clone();
            for _ in 0..k {
                z = (0..n)
                    .map(|i| (0..n).map(|j| c.get(i, j) * z[j]).sum())
                    .collect();
            }
            z
        };
        for (l, layer) in m.layers().iter().enumerate() {
            let mut next = Vec::new();
            for f in 0..layer.f_out {
                let mut acc = vec![0.0; n];
                for g in 0..layer.f_in {
                    let h = m.filter(l, f, g);
                    for (k, hk) in h.coeffs().iter().enumerate() {
                        let z = pow(&u[g], k);
                        for i in 0..n {
                            acc[i] += hk * z[i];
                        }
                    }
                }
                next.push(acc.into_iter().map(|a| a.max(0.0)).collect::<Vec<f64>>());
            }
            u = next;
        }
        let pooled: Vec<f64> = u.iter().map(|f| f.iter().sum::<f64>() / n as f64).collect();
        let r = m.arch.readout_layout();
        let p = m.params();
        let hidden: Vec<f64> = (0..r.hidden)
            .map(|h| {
                let s: f64 = (0..r.f_last)
                    .map(|j| p[r.w1 + h * r.f_last + j] * pooled[j])
                    .sum();
                (s + p[r.b1 + h]).max(0.0)
            })
            .collect();
        (0..r.outputs)
            .map(|o| {
                (0..r.hidden)
                    .map(|h| p[r.w2 + o * r.hidden + h] * hidden[h])
                    .sum::<f64>()
                    + p[r.b2 + o]
            })
            .collect()
    }

    #[test]
    fn forward_matches_reference_implementation() {
        for seed in 0..5 {
            let mut rng = RandomSource::new(seed, 5);
            let a = arch(2, &[3, 2], 2, 5, Task::Classification { classes: 3 });
            let m = VNNModel::init(a, &mut rng).unwrap();
            let c = random_cov(6, seed);
            let x: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
            let got = m.forward(&c, &x).unwrap();
            let expect = reference_forward(&m, &c, &x);
            for (g, e) in got.iter().zip(&expect) {
                assert!((g - e).abs() < 1e-12, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn sparse_and_dense_forward_agree() {
        let mut rng = RandomSource::new(3, 0);
        let m = VNNModel::init(arch(1, &[4, 4], 2, 3, Task::Regression), &mut rng).unwrap();
        let c = random_cov(8, 4);
        let s = to_sparse(&c);
        let x: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let a = m.forward(&c, &x).unwrap()[0];
        let b = m.forward(&s, &x).unwrap()[0];
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn filter_bank_is_permutation_equivariant() {
        let mut rng = RandomSource::new(8, 0);
        let m = VNNModel::init(arch(1, &[3, 2], 2, 3, Task::Regression), &mut rng).unwrap();
        let c = random_cov(7, 8);
        let perm = rng.permutation(7);
        let cp = c.permuted(&perm).unwrap();
        let x: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
        let xp: Vec<f64> = perm.iter().map(|&o| x[o]).collect();
        let e = m.embed(&c, &x).unwrap();
        let ep = m.embed(&cp, &xp).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for f in 0..2 {
                assert!((ep.get(new, f) - e.get(old, f)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = VNNModel::init(
            arch(1, &[2], 1, 2, Task::Regression),
            &mut RandomSource::new(0, 0),
        )
        .unwrap();
        assert!(m.forward(&random_cov(4, 0), &[1.0; 3]).is_err());
        assert!(VNNModel::from_params(m.arch.clone(), vec![0.0; 3]).is_err());
    }
}
