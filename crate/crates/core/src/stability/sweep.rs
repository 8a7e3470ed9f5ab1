use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    eigen_gap, hard_bound, pca_distance_from_eig, q_term, soft_bound, vnn_bound, vnn_distance,
    PcaRegression,
};
use crate::covariance::{
    acv_probabilities, rcv_probabilities, sample_covariance, stochastic_sparsify, threshold,
    ThresholdSpec,
};
use crate::data::{
    covariance_factor, regression_targets, split, Dataset, DatasetMeta, SyntheticCovSpec,
};
use crate::error::{Error, Result};
use crate::filter::empirical_lipschitz_constant;
use crate::linalg::{
    lambda_max, sym_eig, to_sparse, CovMatrix, RandomSource, SymmetricOperator, SymmetricSparse,
};
use crate::model::{
    evaluate, train, Activation, Architecture, Target, Task, TrainingConfig, VNNModel,
};

/// How the estimate is formed from the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Sparsifier {
    Dense,
    Hard {
        tau: f64,
    },
    Soft {
        tau: f64,
    },
    Acv,
    Rcv {
        p: f64,
    },
    /// PCA + linear regression on the leading components instead of a VNN.
    Pca {
        components: usize,
    },
}

impl Sparsifier {
    pub fn name(&self) -> &'static str {
        match self {
            Sparsifier::Dense => "dense",
            Sparsifier::Hard { .. } => "hard",
            Sparsifier::Soft { .. } => "soft",
            Sparsifier::Acv => "acv",
            Sparsifier::Rcv { .. } => "rcv",
            Sparsifier::Pca { .. } => "pca",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub spec: SyntheticCovSpec,
    /// Seed of the true covariance, shared by every cell.
    pub cov_seed: u64,
    pub t_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub sparsifiers: Vec<Sparsifier>,
    pub arch: Architecture,
    pub training: TrainingConfig,
    /// Size of each seed's training data set.
    pub samples: usize,
    pub noise_var: f64,
    /// Worker threads; results do not depend on it.
    pub parallel: usize,
}

impl SweepConfig {
    /// SparseCov protocol: N = 100, 1000 samples, L = 2, F = 13, K = 1.
    pub fn sparse_cov() -> Self {
        let n = 100;
        Self {
            spec: SyntheticCovSpec::sparse_cov(n),
            cov_seed: 0,
            t_grid: (0..8).map(|k| 50 << k).collect(),
            seeds: (0..5).collect(),
            sparsifiers: vec![
                Sparsifier::Dense,
                Sparsifier::Hard {
                    tau: default_tau(n),
                },
            ],
            arch: Architecture {
                input_features: 1,
                layer_widths: vec![13, 13],
                order: 1,
                readout_hidden: 13,
                activation: Activation::Relu,
                task: Task::Regression,
            },
            training: TrainingConfig::default(),
            samples: 1000,
            noise_var: 3.0,
            parallel: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.arch.validate()?;
        self.training.validate()?;
        if self.t_grid.is_empty() || self.t_grid.iter().any(|&t| t < 2) {
            return Err(Error::invalid("t grid must be non-empty with every t >= 2"));
        }
        if self.seeds.is_empty() || self.sparsifiers.is_empty() {
            return Err(Error::invalid("need at least one seed and one sparsifier"));
        }
        if self.arch.input_features != 1 || self.arch.task != Task::Regression {
            return Err(Error::invalid(
                "sweeps run single-feature regression models",
            ));
        }
        if self.samples < 10 {
            return Err(Error::invalid("need at least 10 samples per data set"));
        }
        Ok(())
    }
}

/// `tau = sqrt(log N)`, the threshold scale with a unit constant.
pub fn default_tau(n: usize) -> f64 {
    (n as f64).ln().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: usize,
    pub seed: u64,
    pub sparsifier: String,
    pub empirical_distance: f64,
    pub bound: f64,
    pub mae_or_acc: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub c0: f64,
    pub min_gap: f64,
    pub slope_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Fitted log-log slope of mean distance against `t`, per sparsifier.
    pub slopes: BTreeMap<String, f64>,
    /// Every matrix handed to a model was multiplied by this
    /// (`1 / lambda_max` of the true covariance).
    pub spectral_scale: f64,
    pub notes: Vec<String>,
}

const CSV_HEADER: &str =
    "t,seed,sparsifier,empirical_distance,bound,mae_or_acc,P,Q,c0,min_gap,slope_fit";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.seed,
                r.sparsifier,
                r.empirical_distance,
                r.bound,
                r.mae_or_acc,
                r.p,
                r.q,
                r.c0,
                r.min_gap,
                r.slope_fit
            );
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        let slopes: BTreeMap<&String, Option<f64>> = self
            .slopes
            .iter()
            .map(|(k, v)| (k, v.is_finite().then_some(*v)))
            .collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "slopes": slopes,
            "spectral_scale": self.spectral_scale,
            "log_base": "e",
            "notes": self.notes,
        }))?)
    }
}

/// Least-squares slope of `ln y` against `ln x`. NaN with fewer than two
/// distinct `x` values.
pub fn fit_log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 2 || sxx == 0.0 {
        return f64::NAN;
    }
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

struct Shared {
    true_scaled: SymmetricSparse,
    true_eigs: Vec<f64>,
    scale: f64,
    c0: f64,
    min_gap: f64,
    factor: crate::data::SymmetricFactor,
}

struct SeedState {
    seed: u64,
    data: Dataset,
    model: VNNModel,
}

fn values(d: &Dataset) -> Vec<f64> {
    d.y.iter()
        .map(|t| match t {
            Target::Value(v) => *v,
            Target::Class(k) => *k as f64,
        })
        .collect()
}

/// Train one VNN per seed on the true covariance, then for every `(t, seed)`
/// cell draw `t` samples, form each estimate, and measure embedding distance
/// against the true covariance and the test metric.
pub fn stability_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| run(config))
}

fn run(config: &SweepConfig) -> Result<SweepResult> {
    let n = config.spec.n();
    let true_cov = config
        .spec
        .generate(&mut RandomSource::new(config.cov_seed, 0).fork(1))?;
    let true_sparse = to_sparse(&true_cov);
    let scale = 1.0 / lambda_max(&true_sparse, 1e-6);
    let true_scaled = true_sparse.scaled(scale);
    let true_eigs = sym_eig(&true_cov.scaled(scale))?.eigenvalues;
    let c0 = (0..n)
        .map(|i| true_sparse.row_entries(i).count())
        .max()
        .unwrap_or(0) as f64;
    let shared = Shared {
        min_gap: eigen_gap(&true_eigs)?.min_adjacent_gap,
        true_scaled,
        true_eigs,
        scale,
        c0,
        factor: covariance_factor(&true_cov)?,
    };

    let seeds: Vec<SeedState> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let rng = RandomSource::new(seed, 0x6461_7461);
            let x = shared.factor.sample(config.samples, &mut rng.fork(0));
            let (y, _) = regression_targets(&x, config.noise_var, &mut rng.fork(1))?;
            let splits = split(config.samples, [0.8, 0.1, 0.1], &mut rng.fork(2))?;
            let meta = DatasetMeta {
                generator: "sweep".into(),
                seed: Some(seed),
                params: serde_json::json!({ "spec": config.spec, "cov_seed": config.cov_seed }),
                classes: None,
                true_cov: None,
            };
            let data = Dataset::new(x, y.into_iter().map(Target::Value).collect(), splits, meta)?;
            let init = VNNModel::init(
                config.arch.clone(),
                &mut RandomSource::new(seed, 0x696e_6974),
            )?;
            let training = TrainingConfig {
                seed,
                ..config.training.clone()
            };
            let model = train(init, &shared.true_scaled, &data.training_set(), &training)?.model;
            Ok(SeedState { seed, data, model })
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..config.t_grid.len())
        .flat_map(|ti| (0..seeds.len()).map(move |si| (ti, si)))
        .collect();
    let per_cell: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(ti, si)| run_cell(config, &shared, &seeds[si], config.t_grid[ti]))
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = per_cell.into_iter().flatten().collect();

    let mut slopes = BTreeMap::new();
    for sp in &config.sparsifiers {
        let name = sp.name().to_string();
        let (ts, ds): (Vec<f64>, Vec<f64>) = config
            .t_grid
            .iter()
            .map(|&t| {
                let d: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.t == t && r.sparsifier == name)
                    .map(|r| r.empirical_distance)
                    .collect();
                (t as f64, d.iter().sum::<f64>() / d.len() as f64)
            })
            .unzip();
        slopes.insert(name, fit_log_log_slope(&ts, &ds));
    }
    for r in &mut rows {
        r.slope_fit = slopes[&r.sparsifier];
    }
    Ok(SweepResult {
        rows,
        slopes,
        spectral_scale: scale,
        notes: vec![
            "bounds are leading t^-1/2 terms with unstated constants set to 1".into(),
            "vnn rows: distance between last-layer embeddings; pca rows: distance between PCA projections".into(),
            "stochastic rows report L F^(L-1) sqrt(N P^2 Q) as the bound".into(),
        ],
    })
}

fn run_cell(
    config: &SweepConfig,
    shared: &Shared,
    st: &SeedState,
    t: usize,
) -> Result<Vec<SweepRow>> {
    let n = config.spec.n();
    let rng = RandomSource::new(st.seed, 0x0073_7765_6570).fork(t as u64);
    let x = shared.factor.sample(t, &mut rng.fork(0));
    let sample = sample_covariance(&x)?;
    let test = &st.data.splits.test;
    let xs_eval = st.data.x.select_rows(test);
    let layers = config.arch.layer_widths.len();
    let width = *config.arch.layer_widths.iter().max().expect("validated");
    let filters = st.model.filters();
    let mut rows = Vec::with_capacity(config.sparsifiers.len());

    for (k, sp) in config.sparsifiers.iter().enumerate() {
        let mut draw = rng.fork(1 + k as u64);
        let mut q = 0.0;
        let estimate: CovMatrix = match *sp {
            Sparsifier::Dense | Sparsifier::Pca { .. } => sample.matrix.clone().into(),
            Sparsifier::Hard { tau } => threshold(&sample, &ThresholdSpec::hard(tau))?.into(),
            Sparsifier::Soft { tau } => threshold(&sample, &ThresholdSpec::soft(tau))?.into(),
            Sparsifier::Acv | Sparsifier::Rcv { .. } => {
                let support = sample.support();
                let probs = match *sp {
                    Sparsifier::Acv => acv_probabilities(&support)?,
                    Sparsifier::Rcv { p } => rcv_probabilities(&support, p, &mut draw)?,
                    _ => unreachable!(),
                };
                q = q_term(&support.scaled(shared.scale), &probs)?;
                stochastic_sparsify(&support, &probs, &mut draw)?.into()
            }
        };
        let scaled = estimate.scaled(shared.scale);
        let est_eig = sym_eig(&scaled.to_dense())?;

        let row = if let Sparsifier::Pca { components } = *sp {
            let true_eig = sym_eig(&shared.true_scaled.to_dense())?;
            let dist = pca_distance_from_eig(&true_eig, &est_eig, &xs_eval)?;
            let y = values(&st.data);
            let reg = PcaRegression::fit(
                &scaled.to_dense(),
                &st.data.x,
                &y,
                &st.data.splits.train,
                components,
            )?;
            let gaps = eigen_gap(&shared.true_eigs)?;
            SweepRow {
                t,
                seed: st.seed,
                sparsifier: sp.name().into(),
                empirical_distance: dist.mean,
                bound: 1.0 / gaps.min_pairwise_gap.max(f64::MIN_POSITIVE) / (t as f64).sqrt(),
                mae_or_acc: reg.mae(&st.data.x, &y, test),
                p: 0.0,
                q,
                c0: shared.c0,
                min_gap: shared.min_gap,
                slope_fit: f64::NAN,
            }
        } else {
            let dist = vnn_distance(&st.model, &shared.true_scaled, &scaled, &xs_eval)?;
            let (_, metric) = evaluate(&st.model, &scaled, &st.data.training_set(), test)?;
            let mut union = shared.true_eigs.clone();
            union.extend_from_slice(&est_eig.eigenvalues);
            let mut p: f64 = 0.0;
            for h in &filters {
                if h.order() > 0 {
                    p = p.max(empirical_lipschitz_constant(h, &union)?);
                }
            }
            let pb = if p > 0.0 { p } else { f64::MIN_POSITIVE };
            let net = layers as f64 * (width as f64).powi(layers as i32 - 1);
            let bound = match *sp {
                Sparsifier::Dense => vnn_bound(pb, n, t, layers, width)?,
                Sparsifier::Hard { .. } => net * hard_bound(pb, shared.c0, n, t)?,
                Sparsifier::Soft { .. } => net * soft_bound(pb, shared.c0, n, t, 1.0, 1.0)?,
                _ => net * (n as f64 * p * p * q).sqrt(),
            };
            SweepRow {
                t,
                seed: st.seed,
                sparsifier: sp.name().into(),
                empirical_distance: dist.mean,
                bound,
                mae_or_acc: metric,
                p,
                q,
                c0: shared.c0,
                min_gap: shared.min_gap,
                slope_fit: f64::NAN,
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        SweepConfig {
            spec: SyntheticCovSpec::sparse_cov(12),
            t_grid: vec![50, 200],
            seeds: vec![1, 2],
            sparsifiers: vec![
                Sparsifier::Dense,
                Sparsifier::Hard { tau: 1.0 },
                Sparsifier::Soft { tau: 0.5 },
                Sparsifier::Acv,
                Sparsifier::Rcv { p: 0.5 },
                Sparsifier::Pca { components: 3 },
            ],
            arch: Architecture {
                layer_widths: vec![3, 3],
                readout_hidden: 3,
                ..SweepConfig::sparse_cov().arch
            },
            training: TrainingConfig {
                epochs: 3,
                batch_size: 32,
                ..Default::default()
            },
            samples: 100,
            ..SweepConfig::sparse_cov()
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let t: Vec<f64> = (0..8).map(|k| 50.0 * 2f64.powi(k)).collect();
        let d: Vec<f64> = t.iter().map(|v| 3.7 * v.powf(-0.5)).collect();
        assert!((fit_log_log_slope(&t, &d) + 0.5).abs() < 1e-12);
        assert!(fit_log_log_slope(&[100.0], &[1.0]).is_nan());
    }

    #[test]
    fn single_cell_gives_one_row_per_sparsifier() {
        let mut cfg = tiny();
        cfg.t_grid = vec![60];
        cfg.seeds = vec![3];
        cfg.sparsifiers = vec![Sparsifier::Hard { tau: 1.0 }];
        let r = stability_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.to_csv().lines().count(), 2);
        assert_eq!(r.to_csv(), stability_sweep(&cfg).unwrap().to_csv());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let mut cfg = tiny();
        let serial = stability_sweep(&cfg).unwrap();
        cfg.parallel = 4;
        let parallel = stability_sweep(&cfg).unwrap();
        assert_eq!(serial.to_csv(), parallel.to_csv());
        assert_eq!(serial.rows.len(), 2 * 2 * 6);
        for r in &serial.rows {
            assert!(
                r.empirical_distance.is_finite() && r.bound.is_finite() && r.mae_or_acc.is_finite()
            );
            assert!(r.p.is_finite() && r.q >= 0.0);
            if r.sparsifier == "dense" || r.sparsifier == "hard" || r.sparsifier == "soft" {
                assert_eq!(r.q, 0.0);
            }
        }
        assert!(serial.summary_json().unwrap().contains("\"slopes\""));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny();
        cfg.t_grid = vec![];
        assert!(stability_sweep(&cfg).is_err());
        let mut cfg = tiny();
        cfg.t_grid = vec![1];
        assert!(stability_sweep(&cfg).is_err());
    }
}
