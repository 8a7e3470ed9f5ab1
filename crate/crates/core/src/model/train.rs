use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{backward, Target, Task, VNNModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, RandomSource, SymmetricOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Regression only: fit `target_offset`/`target_scale` to the training
    /// targets before training so the readout works on unit-scale values.
    pub standardize_targets: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.015,
            batch_size: 800,
            weight_decay: 0.001,
            seed: 0,
            standardize_targets: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(
                "learning rate must be finite and non-negative",
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid(
                "weight decay must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay (`p <- p (1 - lr wd)` before the step).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let shrink = 1.0 - self.lr * self.weight_decay;
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p = *p * shrink - self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// Inputs (one row of `n * F_0` values per sample) with their targets and
/// the sample indices used for fitting and for model selection.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub inputs: &'a Matrix,
    pub targets: &'a [Target],
    pub train: &'a [usize],
    pub valid: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// MAE for regression, accuracy for classification.
    pub valid_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: VNNModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: TrainedModel = serde_json::from_str(&text)?;
        check_dim(t.model.arch.num_params(), t.model.params().len())?;
        Ok(t)
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,valid_loss,valid_metric\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.valid_loss, r.valid_metric
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Loss and task metric (MAE or accuracy) over the given samples.
pub fn evaluate(
    model: &VNNModel,
    c: &dyn SymmetricOperator,
    data: &TrainingSet,
    idx: &[usize],
) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let mut preds = Vec::with_capacity(idx.len());
    let mut targets = Vec::with_capacity(idx.len());
    for &i in idx {
        preds.push(model.forward(c, data.inputs.row(i))?);
        targets.push(data.targets[i]);
    }
    let l = super::loss(&preds, &targets)?;
    let metric = match model.arch.task {
        Task::Regression => {
            preds
                .iter()
                .zip(&targets)
                .map(|(p, t)| match t {
                    Target::Value(y) => (p[0] - y).abs(),
                    Target::Class(_) => unreachable!("checked by loss"),
                })
                .sum::<f64>()
                / idx.len() as f64
        }
        Task::Classification { .. } => {
            let hits = preds
                .iter()
                .zip(&targets)
                .filter(|(p, t)| {
                    let best = p
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
                        )
                        .0;
                    matches!(t, Target::Class(k) if *k == best)
                })
                .count();
            hits as f64 / idx.len() as f64
        }
    };
    Ok((l, metric))
}

fn better(task: Task, metric: f64, best: f64) -> bool {
    match task {
        Task::Regression => metric < best,
        Task::Classification { .. } => metric > best,
    }
}

/// Mini-batch Adam. Returns the parameters from the epoch with the best
/// validation metric (training loss when there is no validation split).
pub fn train(
    mut model: VNNModel,
    c: &dyn SymmetricOperator,
    data: &TrainingSet,
    config: &TrainingConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    check_dim(data.inputs.rows(), data.targets.len())?;
    check_dim(c.dim() * model.arch.input_features, data.inputs.cols())?;
    if data.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if let Some(&bad) = data
        .train
        .iter()
        .chain(data.valid)
        .find(|&&i| i >= data.inputs.rows())
    {
        return Err(Error::invalid(format!("sample index {bad} out of range")));
    }
    if config.standardize_targets && model.arch.task == Task::Regression {
        let ys: Vec<f64> = data
            .train
            .iter()
            .map(|&i| match data.targets[i] {
                Target::Value(y) => Ok(y),
                t => Err(Error::invalid(format!(
                    "target {t:?} does not fit regression"
                ))),
            })
            .collect::<Result<_>>()?;
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
        model.target_offset = mean;
        model.target_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    }

    let rng = RandomSource::new(config.seed, 0x0074_7261_696e);
    let mut adam = Adam::new(
        model.params().len(),
        config.learning_rate,
        config.weight_decay,
    );
    let mut history = Vec::with_capacity(config.epochs);
    let select_idx = if data.valid.is_empty() {
        data.train
    } else {
        data.valid
    };
    let (_, init_metric) = evaluate(&model, c, data, select_idx)?;
    let mut best = (0, init_metric, model.clone());

    for epoch in 1..=config.epochs {
        let order: Vec<usize> = rng
            .fork(epoch as u64)
            .permutation(data.train.len())
            .into_iter()
            .map(|k| data.train[k])
            .collect();
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| data.inputs.row(i)).collect();
            let targets: Vec<Target> = batch.iter().map(|&i| data.targets[i]).collect();
            let (l, g) = backward(&model, c, &inputs, &targets)?;
            if !l.is_finite() || g.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, loss: l });
            }
            epoch_loss += l * batch.len() as f64;
            adam.step(model.params_mut(), &g.0);
        }
        let (valid_loss, valid_metric) = evaluate(&model, c, data, select_idx)?;
        if !valid_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: valid_loss,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / data.train.len() as f64,
            valid_loss,
            valid_metric,
        });
        if better(model.arch.task, valid_metric, best.1) {
            best = (epoch, valid_metric, model.clone());
        }
    }
    Ok(TrainedModel {
        model: best.2,
        best_epoch: best.0,
        history,
    })
}
