use std::path::Path;

use super::{
    bench as timing, parse_list, Artifacts, BenchArgs, FreqArgs, GenArgs, SparsifyArgs,
    StabilityArgs, TrainArgs,
};
use crate::covariance::{
    acv_probabilities, expected_nnz, psd_sufficient_check, rcv_probabilities, sample_covariance,
    stochastic_sparsify, threshold, ProbabilityAssignment, SampleCovariance, ThresholdSpec,
};
use crate::data::{
    gen_dense_correlated, load_dataset, save_dataset, synthetic_regression, SyntheticCovSpec,
};
use crate::error::{Error, Result};
use crate::filter::{frequency_response, generalized_frequency_response, linspace, FilterTaps};
use crate::linalg::{
    io, lambda_max, CovMatrix, RandomSource, SymmetricDense, SymmetricOperator, SymmetricSparse,
};
use crate::model::{
    evaluate, train as fit, Activation, Architecture, Task, TrainingConfig, VNNModel,
};
use crate::stability::{default_tau, q_term, stability_sweep, Sparsifier, SweepConfig};

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn preset_spec(args_preset: &str, n: usize) -> Result<SyntheticCovSpec> {
    Ok(match args_preset {
        "sparsecov" => SyntheticCovSpec::sparse_cov(n),
        "largecov" => SyntheticCovSpec::large_cov(n),
        "smallcov" => SyntheticCovSpec::small_cov(n),
        other => {
            return Err(Error::invalid(format!(
                "unknown preset {other:?} (expected sparsecov, largecov, smallcov or spiked)"
            )))
        }
    })
}

pub(crate) fn gen(a: &GenArgs, out: &Path, art: &mut Artifacts) -> Result<()> {
    let spec = if a.preset == "spiked" {
        let betas = match &a.betas {
            Some(text) => parse_list("betas", text)?,
            None => (0..a.r).map(|q| 2.0 * (a.r - q) as f64).collect(),
        };
        if betas.len() != a.r {
            return Err(Error::invalid(format!(
                "--r is {} but {} betas were given",
                a.r,
                betas.len()
            )));
        }
        SyntheticCovSpec::Spiked {
            n: a.n,
            c0: a.c0.unwrap_or(5),
            betas,
        }
    } else {
        let mut spec = preset_spec(&a.preset, a.n)?;
        match &mut spec {
            SyntheticCovSpec::SparseSpd { density, c0, .. } => {
                *density = a.density.unwrap_or(*density);
                *c0 = a.c0.unwrap_or(*c0);
            }
            SyntheticCovSpec::DenseCorrelated { rho, .. } => *rho = a.rho.unwrap_or(*rho),
            SyntheticCovSpec::Spiked { .. } => unreachable!(),
        }
        spec
    };
    let data = synthetic_regression(&spec, a.samples, a.noise_var, a.seed)?;
    for p in save_dataset(out, &data)? {
        art.add(&file_name(&p));
    }
    println!(
        "{} samples, {} nodes, splits {}/{}/{}",
        data.samples(),
        data.nodes(),
        data.splits.train.len(),
        data.splits.valid.len(),
        data.splits.test.len()
    );
    Ok(())
}

enum Estimate {
    Dense(SymmetricDense),
    Thresholded(SymmetricSparse),
    Stochastic {
        drawn: SymmetricSparse,
        probs: ProbabilityAssignment,
        support: SymmetricSparse,
    },
}

fn estimate(
    method: &str,
    sample: &SampleCovariance,
    tau: Option<f64>,
    p: Option<f64>,
    rng: &mut RandomSource,
) -> Result<Estimate> {
    let need_tau = || tau.ok_or_else(|| Error::invalid(format!("--tau is required for {method}")));
    Ok(match method {
        "dense" => Estimate::Dense(sample.matrix.clone()),
        "hard" => Estimate::Thresholded(threshold(sample, &ThresholdSpec::hard(need_tau()?))?),
        "soft" => Estimate::Thresholded(threshold(sample, &ThresholdSpec::soft(need_tau()?))?),
        "acv" | "rcv" => {
            let support = sample.support();
            let probs = if method == "acv" {
                acv_probabilities(&support)?
            } else {
                let p = p.ok_or_else(|| Error::invalid("--p is required for rcv"))?;
                rcv_probabilities(&support, p, rng)?
            };
            let drawn = stochastic_sparsify(&support, &probs, rng)?;
            Estimate::Stochastic {
                drawn,
                probs,
                support,
            }
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown method {other:?} (expected dense, hard, soft, acv or rcv)"
            )))
        }
    })
}

impl Estimate {
    fn matrix(&self) -> CovMatrix {
        match self {
            Estimate::Dense(a) => a.clone().into(),
            Estimate::Thresholded(s) | Estimate::Stochastic { drawn: s, .. } => s.clone().into(),
        }
    }
}

pub(crate) fn sparsify(a: &SparsifyArgs, out: &Path, art: &mut Artifacts) -> Result<()> {
    let thresholding = matches!(a.method.as_str(), "hard" | "soft");
    let sample = match (&a.input, &a.data) {
        (Some(path), None) => {
            let m = io::read_matrix(path)?.to_dense();
            let t = match a.t {
                Some(t) => t,
                None if thresholding => {
                    return Err(Error::invalid(
                        "--t is required to threshold an --input matrix",
                    ))
                }
                None => 2,
            };
            let n = m.n();
            SampleCovariance::from_parts(m, t, vec![0.0; n])?
        }
        (None, Some(dir)) => sample_covariance(&load_dataset(dir)?.train_rows())?,
        _ => return Err(Error::invalid("give exactly one of --input or --data")),
    };
    if a.method == "dense" {
        return Err(Error::invalid("sparsify needs hard, soft, acv or rcv"));
    }
    let n = sample.n();
    let input_nnz = sample.support().nnz();
    let est = estimate(
        &a.method,
        &sample,
        a.tau,
        a.p,
        &mut RandomSource::new(a.seed, 0x7370_6172),
    )?;
    let sparse = match &est {
        Estimate::Thresholded(s) | Estimate::Stochastic { drawn: s, .. } => s,
        Estimate::Dense(_) => unreachable!(),
    };
    io::write_sparse(&out.join("sparsified.txt"), sparse)?;
    art.add("sparsified.txt");

    let mut stats = serde_json::json!({
        "method": a.method,
        "n": n,
        "t": sample.t,
        "input_nnz": input_nnz,
        "nnz": sparse.nnz(),
    });
    println!("nnz: {} (input {input_nnz})", sparse.nnz());
    if let Estimate::Stochastic { probs, support, .. } = &est {
        let off = (support.nnz() - n) as f64;
        let mean_p = if a.method == "rcv" {
            a.p.expect("checked")
        } else {
            probs.mean_over(support)
        };
        let formula = mean_p * off + n as f64;
        let assigned = expected_nnz(probs, support)?;
        let q = q_term(support, probs)?;
        println!("expected nnz: {formula}");
        println!("expected nnz (assigned probabilities): {assigned}");
        println!("Q: {q}");
        stats["expected_nnz"] = formula.into();
        stats["expected_nnz_assigned"] = assigned.into();
        stats["mean_keep_probability"] = mean_p.into();
        stats["q"] = q.into();
    }
    let psd = psd_sufficient_check(sparse, &sample)?;
    println!(
        "PSD sufficient check: {} (gap {}, lambda_min {})",
        if psd.satisfied {
            "satisfied"
        } else {
            "not satisfied"
        },
        psd.epsilon_gap,
        psd.lambda_min
    );
    stats["psd_check"] = serde_json::to_value(psd)?;
    art.write(
        out,
        "stats.json",
        &(serde_json::to_string_pretty(&stats)? + "\n"),
    )
}

fn activation(name: &str) -> Result<Activation> {
    match name {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(Error::invalid(format!(
            "unknown activation {other:?} (expected relu or tanh)"
        ))),
    }
}

pub(crate) fn train(a: &TrainArgs, out: &Path, art: &mut Artifacts) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let task = match data.meta.classes {
        Some(classes) => Task::Classification { classes },
        None => Task::Regression,
    };
    let sample = match a.cov_source.as_str() {
        "sample" => sample_covariance(&data.train_rows())?,
        "true" => {
            let c = data.meta.true_cov.clone().ok_or_else(|| {
                Error::invalid(format!("{} has no true covariance", a.data.display()))
            })?;
            let n = c.n();
            SampleCovariance::from_parts(c, data.splits.train.len().max(2), vec![0.0; n])?
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown cov-source {other:?} (expected sample or true)"
            )))
        }
    };
    let est = estimate(
        &a.method,
        &sample,
        a.tau,
        a.p,
        &mut RandomSource::new(a.seed, 0x7370_6172),
    )?;
    // Spectral normalization by the unsparsified estimate keeps every method on one scale.
    let scale = 1.0 / lambda_max(&sample.matrix, 1e-6);
    let c = est.matrix().scaled(scale);

    let arch = Architecture {
        input_features: 1,
        layer_widths: parse_list("layers", &a.layers)?,
        order: a.order,
        readout_hidden: a.hidden,
        activation: activation(&a.activation)?,
        task,
    };
    let config = TrainingConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        weight_decay: a.weight_decay,
        seed: a.seed,
        standardize_targets: a.standardize_targets,
    };
    let init = VNNModel::init(arch, &mut RandomSource::new(a.seed, 0x696e_6974))?;
    let trained = fit(init, &c, &data.training_set(), &config)?;
    trained.save_checkpoint(&out.join("checkpoint.json"))?;
    art.add("checkpoint.json");
    trained.write_history_csv(&out.join("history.csv"))?;
    art.add("history.csv");

    let metric = if matches!(task, Task::Regression) {
        "mae"
    } else {
        "accuracy"
    };
    let mut metrics = serde_json::json!({
        "method": a.method,
        "nnz": c.nnz(),
        "spectral_scale": scale,
        "best_epoch": trained.best_epoch,
        "metric": metric,
    });
    if let Some(best) = trained.history.get(trained.best_epoch) {
        metrics["valid_metric"] = best.valid_metric.into();
    }
    if !data.splits.test.is_empty() {
        let (loss, m) = evaluate(&trained.model, &c, &data.training_set(), &data.splits.test)?;
        metrics["test_loss"] = loss.into();
        metrics["test_metric"] = m.into();
        println!("test {metric}: {m}");
    }
    println!("best epoch: {}", trained.best_epoch);
    art.write(
        out,
        "metrics.json",
        &(serde_json::to_string_pretty(&metrics)? + "\n"),
    )
}

pub(crate) fn stability(a: &StabilityArgs, out: &Path, art: &mut Artifacts) -> Result<()> {
    let tau = a.tau.unwrap_or_else(|| default_tau(a.n));
    let sparsifiers = a
        .methods
        .split(',')
        .map(str::trim)
        .map(|m| match m {
            "dense" => Ok(Sparsifier::Dense),
            "hard" => Ok(Sparsifier::Hard { tau }),
            "soft" => Ok(Sparsifier::Soft { tau }),
            "acv" => Ok(Sparsifier::Acv),
            "rcv" => Ok(Sparsifier::Rcv { p: a.p }),
            "pca" => Ok(Sparsifier::Pca {
                components: a.pca_components,
            }),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let base = SweepConfig::sparse_cov();
    let config = SweepConfig {
        spec: preset_spec(&a.preset, a.n)?,
        cov_seed: a.cov_seed,
        t_grid: parse_list("t-grid", &a.t_grid)?,
        seeds: parse_list("seeds", &a.seeds)?,
        sparsifiers,
        arch: Architecture {
            layer_widths: parse_list("layers", &a.layers)?,
            order: a.order,
            readout_hidden: a.hidden,
            ..base.arch
        },
        training: TrainingConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            batch_size: a.batch_size,
            weight_decay: a.weight_decay,
            ..base.training
        },
        samples: a.samples,
        noise_var: a.noise_var,
        parallel: a.parallel,
    };
    let result = stability_sweep(&config)?;
    art.write(out, "sweep.csv", &result.to_csv())?;
    art.write(out, "summary.json", &(result.summary_json()? + "\n"))?;
    for (name, slope) in &result.slopes {
        println!("{name}: log-log slope {slope}");
    }
    Ok(())
}

pub(crate) fn bench(a: &BenchArgs, out: &Path, art: &mut Artifacts) -> Result<()> {
    let c = gen_dense_correlated(a.n, 0.7, &mut RandomSource::new(a.seed, 0x6c61_7267))?;
    let sample = SampleCovariance::from_parts(c, a.t, vec![0.0; a.n])?;
    let mut rng = RandomSource::new(a.seed, 0x7370_6172);
    let mut mats = Vec::new();
    for m in a.methods.split(',').map(str::trim) {
        let est = estimate(m, &sample, Some(a.tau), Some(a.p), &mut rng)?;
        mats.push((m.to_string(), est.matrix()));
    }
    let ops: Vec<(String, &dyn SymmetricOperator)> = mats
        .iter()
        .map(|(m, c)| (m.clone(), c as &dyn SymmetricOperator))
        .collect();
    let rows = timing::bench_forward(&ops, a.order, a.features, a.warmup, a.iters, a.seed)?;
    for r in &rows {
        println!(
            "{}: nnz {}, median {:.6} s, speedup {:.2}",
            r.method, r.nnz, r.median_time, r.speedup
        );
    }
    art.write(out, "bench.csv", &timing::to_csv(&rows))
}

pub(crate) fn freq(a: &FreqArgs, out: &Path, art: &mut Artifacts) -> Result<()> {
    let h = FilterTaps::new(parse_list("taps", &a.taps)?)?;
    if a.resolution == 0 {
        return Err(Error::invalid("--resolution must be positive"));
    }
    if !(a.lambda_min.is_finite() && a.lambda_max.is_finite()) {
        return Err(Error::invalid("lambda range must be finite"));
    }
    let grid = linspace(a.lambda_min, a.lambda_max, a.resolution);
    let mut csv = String::new();
    match a.dims {
        1 => {
            csv.push_str("lambda,h\n");
            for (l, v) in grid.iter().zip(frequency_response(&h, &grid)) {
                csv.push_str(&format!("{l},{v}\n"));
            }
        }
        2 => {
            csv.push_str("lambda1,lambda2,h\n");
            let k = h.order();
            for &l1 in &grid {
                for &l2 in &grid {
                    let lambda: Vec<f64> = (0..k).map(|m| if m == 0 { l1 } else { l2 }).collect();
                    csv.push_str(&format!(
                        "{l1},{l2},{}\n",
                        generalized_frequency_response(&h, &lambda)?
                    ));
                }
            }
        }
        d => return Err(Error::invalid(format!("--dims must be 1 or 2, got {d}"))),
    }
    art.write(out, "freq.csv", &csv)
}
