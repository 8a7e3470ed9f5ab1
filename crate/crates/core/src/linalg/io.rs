//! Plain-text matrix files.
//!
//! Sparse: a header line `n m` followed by `m` lines `i j value`, 0-based,
//! upper triangle only (`i <= j`); the lower triangle is mirrored on load.
//!
//! Dense: a header line `n` followed by `n` rows of `n` whitespace-separated
//! values.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every entry bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CovMatrix, SymmetricDense, SymmetricSparse};
use crate::error::{Error, Result};

pub fn format_sparse(s: &SymmetricSparse) -> String {
    let upper = s.upper_triplets();
    let mut out = String::with_capacity(24 * (upper.len() + 1));
    let _ = writeln!(out, "{} {}", s.n(), upper.len());
    for (i, j, v) in upper {
        let _ = writeln!(out, "{i} {j} {v}");
    }
    out
}

pub fn format_dense(a: &SymmetricDense) -> String {
    let n = a.n();
    let mut out = String::with_capacity(20 * n * n + 8);
    let _ = writeln!(out, "{n}");
    for i in 0..n {
        let row: Vec<String> = a.row(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn write_sparse(path: &Path, s: &SymmetricSparse) -> Result<()> {
    fs::write(path, format_sparse(s)).map_err(|e| Error::io(path, e))
}

pub fn write_dense(path: &Path, a: &SymmetricDense) -> Result<()> {
    fs::write(path, format_dense(a)).map_err(|e| Error::io(path, e))
}

pub fn write_matrix(path: &Path, m: &CovMatrix) -> Result<()> {
    match m {
        CovMatrix::Dense(a) => write_dense(path, a),
        CovMatrix::Sparse(s) => write_sparse(path, s),
    }
}

/// Read either format; a one-token header means dense, two tokens sparse.
pub fn read_matrix(path: &Path) -> Result<CovMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<CovMatrix> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| perr(1, "empty matrix file".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |tok: &str, line: usize| {
        tok.parse::<usize>().map_err(|_| {
            perr(
                line,
                format!("expected a non-negative integer, found {tok:?}"),
            )
        })
    };
    let parse_f64 = |tok: &str, line: usize| {
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| perr(line, format!("expected a finite number, found {tok:?}")))
    };
    match head.as_slice() {
        [n] => {
            let n = parse_usize(n, hline)?;
            let mut data = Vec::with_capacity(n * n);
            let mut rows = 0;
            for (line, l) in lines {
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != n {
                    return Err(perr(
                        line,
                        format!("expected {n} values, found {}", toks.len()),
                    ));
                }
                for t in toks {
                    data.push(parse_f64(t, line)?);
                }
                rows += 1;
            }
            if rows != n {
                return Err(perr(
                    hline,
                    format!("header declares {n} rows, found {rows}"),
                ));
            }
            Ok(CovMatrix::Dense(SymmetricDense::from_row_major(n, data)?))
        }
        [n, m] => {
            let n = parse_usize(n, hline)?;
            let m = parse_usize(m, hline)?;
            let mut triplets = Vec::with_capacity(m);
            for (line, l) in lines {
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(perr(line, "expected `i j value`".into()));
                }
                let i = parse_usize(toks[0], line)?;
                let j = parse_usize(toks[1], line)?;
                let v = parse_f64(toks[2], line)?;
                if i > j || j >= n {
                    return Err(perr(line, format!("({i}, {j}) outside the upper triangle")));
                }
                triplets.push((i, j, v));
            }
            if triplets.len() != m {
                return Err(perr(
                    hline,
                    format!("header declares {m} entries, found {}", triplets.len()),
                ));
            }
            Ok(CovMatrix::Sparse(SymmetricSparse::from_upper_triplets(
                n, &triplets,
            )?))
        }
        _ => Err(perr(
            hline,
            "header must be `n` (dense) or `n nnz` (sparse)".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_sparse;

    #[test]
    fn sparse_text_round_trip() {
        let a = SymmetricDense::from_fn(4, |i, j| {
            if i == j {
                1.0 / 3.0
            } else if j == i + 1 {
                -0.1
            } else {
                0.0
            }
        });
        let s = to_sparse(&a);
        let text = format_sparse(&s);
        assert!(text.starts_with("4 7\n"));
        let back = parse_matrix(&text, Path::new("mem")).unwrap();
        assert_eq!(back, CovMatrix::Sparse(s));
    }

    #[test]
    fn dense_text_round_trip() {
        let a = SymmetricDense::from_fn(3, |i, j| (i as f64 + 0.1) * (j as f64 - 0.7));
        let back = parse_matrix(&format_dense(&a), Path::new("mem")).unwrap();
        assert_eq!(back, CovMatrix::Dense(a));
    }

    #[test]
    fn bad_files_name_the_line() {
        let err = parse_matrix("2\n1 0\n0 x\n", Path::new("m.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(parse_matrix("", Path::new("m.txt")).is_err());
        assert!(parse_matrix("2 1\n1 0 1.0\n", Path::new("m.txt")).is_err());
        assert!(parse_matrix("2 2\n0 0 1.0\n", Path::new("m.txt")).is_err());
    }
}
