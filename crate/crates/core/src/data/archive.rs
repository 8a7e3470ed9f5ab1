//! Data set directories and CSV input.
//!
//! An archive directory holds `X.csv` (one sample per row, header
//! `x0,x1,...`), `y.csv` (header `y`), `splits.json`, `meta.json` and, for
//! synthetic data, `true_cov.txt` in the matrix text format.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetMeta, Splits};
use crate::error::{Error, Result};
use crate::linalg::{io, CovMatrix, Matrix, SymmetricOperator};
use crate::model::Target;

const TRUE_COV: &str = "true_cov.txt";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `dataset` into `dir` (created if missing) and return the files written.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let mut x = (0..dataset.nodes())
        .map(|j| format!("x{j}"))
        .collect::<Vec<_>>()
        .join(",");
    x.push('\n');
    for i in 0..dataset.samples() {
        let row: Vec<String> = dataset.x.row(i).iter().map(f64::to_string).collect();
        x.push_str(&row.join(","));
        x.push('\n');
    }
    let mut y = String::from("y\n");
    for t in &dataset.y {
        match t {
            Target::Value(v) => y.push_str(&v.to_string()),
            Target::Class(k) => y.push_str(&k.to_string()),
        }
        y.push('\n');
    }
    for (name, text) in [
        ("X.csv", x),
        ("y.csv", y),
        (
            "splits.json",
            serde_json::to_string_pretty(&dataset.splits)?,
        ),
        ("meta.json", serde_json::to_string_pretty(&dataset.meta)?),
    ] {
        let p = dir.join(name);
        write(&p, &text)?;
        files.push(p);
    }
    if let Some(c) = &dataset.meta.true_cov {
        let p = dir.join(TRUE_COV);
        io::write_dense(&p, c)?;
        files.push(p);
    }
    Ok(files)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let mut meta: DatasetMeta = serde_json::from_str(&read("meta.json")?)?;
    let splits: Splits = serde_json::from_str(&read("splits.json")?)?;
    let x = read_numeric_csv(&dir.join("X.csv"))?.0;
    let schema = CsvSchema {
        label: "y".into(),
        classes: meta.classes,
    };
    let (ymat, _) = read_numeric_csv(&dir.join("y.csv"))?;
    let y = (0..ymat.rows())
        .map(|i| schema.target(ymat.get(i, 0), &dir.join("y.csv"), i + 2))
        .collect::<Result<Vec<_>>>()?;
    let cov_path = dir.join(TRUE_COV);
    if cov_path.exists() {
        meta.true_cov = Some(match io::read_matrix(&cov_path)? {
            CovMatrix::Dense(a) => a,
            CovMatrix::Sparse(s) => s.to_dense(),
        });
    }
    Dataset::new(x, y, splits, meta)
}

/// Which CSV column holds the label, and whether labels are class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub label: String,
    /// `Some(c)`: labels are integers in `0..c`; `None`: real targets.
    pub classes: Option<usize>,
}

impl CsvSchema {
    fn target(&self, v: f64, path: &Path, line: usize) -> Result<Target> {
        match self.classes {
            None => Ok(Target::Value(v)),
            Some(c) => {
                if v.fract() == 0.0 && v >= 0.0 && (v as usize) < c {
                    Ok(Target::Class(v as usize))
                } else {
                    Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("label {v} is not a class index below {c}"),
                    })
                }
            }
        }
    }
}

/// Numeric CSV with a header row. Returns the values and the header.
fn read_numeric_csv(path: &Path) -> Result<(Matrix, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "empty file".into(),
        });
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (k, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("column {:?}: {cell:?} is not a finite number", header[k]),
                })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            msg: "no data rows".into(),
        });
    }
    Ok((Matrix::from_vec(rows, header.len(), data)?, header))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

/// Tabular data: every column but `schema.label` becomes a node value.
/// All samples are placed in the training split.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let (m, header) = read_numeric_csv(path)?;
    let label = header
        .iter()
        .position(|h| *h == schema.label)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("no label column {:?}", schema.label),
        })?;
    if header.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "need at least one feature column besides the label".into(),
        });
    }
    let cols = header.len() - 1;
    let mut x = Matrix::zeros(m.rows(), cols);
    let mut y = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let mut c = 0;
        for j in 0..header.len() {
            if j == label {
                y.push(schema.target(m.get(i, j), path, i + 2)?);
            } else {
                x.set(i, c, m.get(i, j));
                c += 1;
            }
        }
    }
    let meta = DatasetMeta {
        generator: "csv".into(),
        seed: None,
        params: serde_json::json!({ "source": path.display().to_string(), "label": schema.label }),
        classes: schema.classes,
        true_cov: None,
    };
    let samples = x.rows();
    Dataset::new(x, y, Splits::all_train(samples), meta)
}
