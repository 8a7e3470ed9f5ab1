use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RandomSource, SymmetricOperator};
use crate::model::{layer_forward, Activation, Architecture, Task, VNNModel};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub nnz: usize,
    /// Seconds.
    pub median_time: f64,
    /// Median time of the first operator divided by this one's.
    pub speedup: f64,
}

/// Median wall time of one `features -> features` VNN layer forward pass of
/// order `order` on each operator. The first operator is the reference for
/// the speedup column. Single threaded.
pub fn bench_forward(
    ops: &[(String, &dyn SymmetricOperator)],
    order: usize,
    features: usize,
    warmup: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if warmup < 3 || iters < 20 {
        return Err(Error::invalid(
            "benchmarks need at least 3 warmup and 20 measured iterations",
        ));
    }
    let Some((_, first)) = ops.first() else {
        return Err(Error::invalid("nothing to benchmark"));
    };
    let n = first.dim();
    let arch = Architecture {
        input_features: features,
        layer_widths: vec![features],
        order,
        readout_hidden: 1,
        activation: Activation::Relu,
        task: Task::Regression,
    };
    let mut rng = RandomSource::new(seed, 0x6265_6e63);
    let model = VNNModel::init(arch, &mut rng)?;
    let layer = model.layers()[0];
    let taps = &model.params()[..layer.num_params()];
    let u = Matrix::from_fn(n, features, |_, _| rng.normal());

    let mut rows: Vec<BenchRow> = Vec::with_capacity(ops.len());
    for (name, op) in ops {
        if op.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: op.dim(),
            });
        }
        for _ in 0..warmup {
            std::hint::black_box(layer_forward(
                &layer,
                taps,
                *op,
                u.as_slice(),
                Activation::Relu,
            )?);
        }
        let mut times = Vec::with_capacity(iters);
        for _ in 0..iters {
            let start = Instant::now();
            std::hint::black_box(layer_forward(
                &layer,
                taps,
                *op,
                u.as_slice(),
                Activation::Relu,
            )?);
            times.push(start.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        let median = if iters % 2 == 1 {
            times[iters / 2]
        } else {
            0.5 * (times[iters / 2 - 1] + times[iters / 2])
        };
        let reference = rows.first().map_or(median, |r| r.median_time);
        rows.push(BenchRow {
            method: name.clone(),
            nnz: op.nnz(),
            median_time: median,
            speedup: reference / median,
        });
    }
    Ok(rows)
}

pub(crate) fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,nnz,median_time,speedup\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.method, r.nnz, r.median_time, r.speedup
        ));
    }
    out
}
