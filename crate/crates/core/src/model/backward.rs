use serde::{Deserialize, Serialize};

use super::{Task, VNNModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::SymmetricOperator;

/// Per-sample supervision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Value(f64),
    Class(usize),
}

/// Gradient of the loss with respect to the model's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.0)
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn sample_loss(pred: &[f64], target: Target) -> Result<f64> {
    match target {
        Target::Value(y) => {
            check_dim(1, pred.len())?;
            Ok((pred[0] - y).powi(2))
        }
        Target::Class(k) => {
            if k >= pred.len() {
                return Err(Error::invalid(format!(
                    "class label {k} out of range for {} logits",
                    pred.len()
                )));
            }
            Ok(-log_softmax(pred)[k])
        }
    }
}

/// Batch-mean loss: squared error for values, softmax cross-entropy for
/// class labels.
pub fn loss(preds: &[Vec<f64>], targets: &[Target]) -> Result<f64> {
    check_dim(preds.len(), targets.len())?;
    if preds.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        total += sample_loss(p, *t)?;
    }
    Ok(total / preds.len() as f64)
}

fn check_target(task: Task, t: Target) -> Result<()> {
    match (task, t) {
        (Task::Regression, Target::Value(v)) if v.is_finite() => Ok(()),
        (Task::Classification { classes }, Target::Class(k)) if k < classes => Ok(()),
        _ => Err(Error::invalid(format!(
            "target {t:?} does not fit task {task:?}"
        ))),
    }
}

/// Batch-mean loss and its exact gradient.
pub fn backward(
    model: &VNNModel,
    c: &dyn SymmetricOperator,
    inputs: &[&[f64]],
    targets: &[Target],
) -> Result<(f64, Gradients)> {
    check_dim(inputs.len(), targets.len())?;
    if inputs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = c.dim();
    let arch = &model.arch;
    let layers = model.layers();
    let r = arch.readout_layout();
    let params = model.params();
    let inv_b = 1.0 / inputs.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;

    for (x, &target) in inputs.iter().zip(targets) {
        model.check_input(c, x)?;
        check_target(arch.task, target)?;
        let cache = model.forward_cached(c, x);
        let pred = model.finish(&cache.raw);
        total += sample_loss(&pred, target)?;

        // dL/draw
        let draw: Vec<f64> = match target {
            Target::Value(y) => vec![2.0 * (pred[0] - y) * model.target_scale * inv_b],
            Target::Class(k) => {
                let mut p: Vec<f64> = log_softmax(&cache.raw).iter().map(|l| l.exp()).collect();
                p[k] -= 1.0;
                p.iter().map(|v| v * inv_b).collect()
            }
        };

        let mut dhidden = vec![0.0; r.hidden];
        for (o, &d) in draw.iter().enumerate() {
            grad[r.b2 + o] += d;
            for h in 0..r.hidden {
                grad[r.w2 + o * r.hidden + h] += d * cache.hidden[h];
                dhidden[h] += d * params[r.w2 + o * r.hidden + h];
            }
        }
        let mut dpooled = vec![0.0; r.f_last];
        for h in 0..r.hidden {
            if cache.hidden_pre[h] <= 0.0 {
                continue;
            }
            let d = dhidden[h];
            grad[r.b1 + h] += d;
            for j in 0..r.f_last {
                grad[r.w1 + h * r.f_last + j] += d * cache.pooled[j];
                dpooled[j] += d * params[r.w1 + h * r.f_last + j];
            }
        }

        // Mean pooling spreads the gradient evenly over nodes.
        let mut du: Vec<f64> = Vec::with_capacity(n * r.f_last);
        for _ in 0..n {
            du.extend(dpooled.iter().map(|d| d / n as f64));
        }

        for (l, layer) in layers.iter().enumerate().rev() {
            let (f_in, f_out) = (layer.f_in, layer.f_out);
            let da: Vec<f64> = du
                .iter()
                .zip(&cache.pre[l])
                .zip(&cache.post[l])
                .map(|((d, &a), &u)| d * arch.activation.derivative(a, u))
                .collect();
            // dH_k = Z_k^T dA ; dZ_k = dA H_k^T
            let mut dz = vec![vec![0.0; n * f_in]; layer.order + 1];
            for (k, z) in cache.shifted[l].iter().enumerate() {
                for i in 0..n {
                    let darow = &da[i * f_out..(i + 1) * f_out];
                    for g in 0..f_in {
                        let base = layer.tap_index(k, g, 0);
                        let zig = z[i * f_in + g];
                        let mut acc = 0.0;
                        for f in 0..f_out {
                            grad[base + f] += zig * darow[f];
                            acc += darow[f] * params[base + f];
                        }
                        dz[k][i * f_in + g] = acc;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // dU = sum_k C^k dZ_k, by Horner.
            let mut g = dz.pop().expect("order + 1 >= 1");
            let mut tmp = vec![0.0; g.len()];
            while let Some(dzk) = dz.pop() {
                c.apply_block_into(&g, f_in, &mut tmp);
                for ((gv, t), d) in g.iter_mut().zip(&tmp).zip(&dzk) {
                    *gv = t + d;
                }
            }
            du = g;
        }
    }
    Ok((total * inv_b, Gradients(grad)))
}
