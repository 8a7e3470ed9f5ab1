//! C interface to `svnn`.
//!
//! Objects are opaque handles created by `svnn_*` constructors and released
//! with the matching `*_free`. Every call returns an [`SvnnStatus`]; on
//! failure a description is available from [`svnn_last_error`] on the same
//! thread until the next failing call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use svnn::covariance::{
    acv_probabilities, rcv_probabilities, sample_covariance, stochastic_sparsify, threshold,
    SampleCovariance, ThresholdSpec,
};
use svnn::filter::{apply_filter, FilterTaps};
use svnn::linalg::{
    io, lambda_max, to_sparse, CovMatrix, Matrix, RandomSource, SymmetricDense, SymmetricOperator,
};
use svnn::model::{TrainedModel, VNNModel};
use svnn::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Eigensolver failure, non-PSD input, or diverged training.
    Numerical = 4,
    Io = 5,
    Parse = 6,
    /// A Rust panic was caught; the library state is still usable.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvnnThreshold {
    Hard = 0,
    Soft = 1,
}

/// Symmetric covariance matrix (dense or sparse storage).
pub struct SvnnMatrix {
    inner: CovMatrix,
}

/// Trained VNN loaded from a checkpoint.
pub struct SvnnModel {
    inner: VNNModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(SvnnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            _ if e.is_numerical() => SvnnStatus::Numerical,
            Error::DimensionMismatch { .. } => SvnnStatus::DimensionMismatch,
            Error::Parse { .. } | Error::Json(_) => SvnnStatus::Parse,
            Error::Io { .. } => SvnnStatus::Io,
            _ => SvnnStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SvnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SvnnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            SvnnStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SvnnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        Fail(
            SvnnStatus::InvalidArgument,
            "path is not valid UTF-8".into(),
        )
    })
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_len(expected: usize, got: usize) -> Result<(), Fail> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got }.into())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn svnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn svnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copy an `n x n` row-major symmetric matrix into a new handle.
///
/// # Safety
/// `data` must point to `n * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_matrix_from_dense(
    n: usize,
    data: *const f64,
    out: *mut *mut SvnnMatrix,
) -> SvnnStatus {
    guard(|| {
        let v = slice(data, n * n, "data")?.to_vec();
        let m = SymmetricDense::from_row_major(n, v)?;
        put(out, SvnnMatrix { inner: m.into() })
    })
}

/// Read a matrix in the text format (dense or sparse header).
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_matrix_read(
    file: *const c_char,
    out: *mut *mut SvnnMatrix,
) -> SvnnStatus {
    guard(|| {
        let m = io::read_matrix(&path(file)?)?;
        put(out, SvnnMatrix { inner: m })
    })
}

/// # Safety
/// `m` must be a live handle and `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn svnn_matrix_write(
    m: *const SvnnMatrix,
    file: *const c_char,
) -> SvnnStatus {
    guard(|| Ok(io::write_matrix(&path(file)?, &as_ref(m, "matrix")?.inner)?))
}

/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_matrix_dim(m: *const SvnnMatrix, out: *mut usize) -> SvnnStatus {
    guard(|| {
        let d = as_ref(m, "matrix")?.inner.dim();
        *out.as_mut().ok_or_else(|| null("out"))? = d;
        Ok(())
    })
}

/// Stored entries, both triangles and the diagonal.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_matrix_nnz(m: *const SvnnMatrix, out: *mut usize) -> SvnnStatus {
    guard(|| {
        let z = as_ref(m, "matrix")?.inner.nnz();
        *out.as_mut().ok_or_else(|| null("out"))? = z;
        Ok(())
    })
}

/// Write the matrix row-major into `out`, which holds `len == n * n` doubles.
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn svnn_matrix_to_dense(
    m: *const SvnnMatrix,
    out: *mut f64,
    len: usize,
) -> SvnnStatus {
    guard(|| {
        let dense = as_ref(m, "matrix")?.inner.to_dense();
        check_len(dense.n() * dense.n(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(dense.as_slice());
        Ok(())
    })
}

/// Release a matrix. NULL is ignored.
///
/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svnn_matrix_free(m: *mut SvnnMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Sample covariance (1/t normalization) of `t` samples of `n` variables,
/// row-major in `x`.
///
/// # Safety
/// `x` must point to `t * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_sample_covariance(
    x: *const f64,
    t: usize,
    n: usize,
    out: *mut *mut SvnnMatrix,
) -> SvnnStatus {
    guard(|| {
        let data = Matrix::from_vec(t, n, slice(x, t * n, "x")?.to_vec())?;
        let s = sample_covariance(&data)?;
        put(
            out,
            SvnnMatrix {
                inner: s.matrix.into(),
            },
        )
    })
}

/// Threshold an estimate built from `t` samples at `tau / sqrt(t)`; the
/// diagonal is kept.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_threshold(
    m: *const SvnnMatrix,
    t: usize,
    tau: f64,
    kind: SvnnThreshold,
    out: *mut *mut SvnnMatrix,
) -> SvnnStatus {
    guard(|| {
        let dense = as_ref(m, "matrix")?.inner.to_dense();
        let n = dense.n();
        let s = SampleCovariance::from_parts(dense, t, vec![0.0; n])?;
        let spec = match kind {
            SvnnThreshold::Hard => ThresholdSpec::hard(tau),
            SvnnThreshold::Soft => ThresholdSpec::soft(tau),
        };
        put(
            out,
            SvnnMatrix {
                inner: threshold(&s, &spec)?.into(),
            },
        )
    })
}

fn stochastic(m: &SvnnMatrix, rcv_p: Option<f64>, seed: u64) -> Result<SvnnMatrix, Fail> {
    let support = match &m.inner {
        CovMatrix::Sparse(s) => s.clone(),
        CovMatrix::Dense(a) => to_sparse(a),
    };
    let mut rng = RandomSource::new(seed, 0x7370_6172);
    let probs = match rcv_p {
        Some(p) => rcv_probabilities(&support, p, &mut rng)?,
        None => acv_probabilities(&support)?,
    };
    Ok(SvnnMatrix {
        inner: stochastic_sparsify(&support, &probs, &mut rng)?.into(),
    })
}

/// One ACV draw: keep `c_ij` with probability `|c_ij| / max |c_ij|`.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_sparsify_acv(
    m: *const SvnnMatrix,
    seed: u64,
    out: *mut *mut SvnnMatrix,
) -> SvnnStatus {
    guard(|| put(out, stochastic(as_ref(m, "matrix")?, None, seed)?))
}

/// One RCV draw with mean keep probability `p` in (0, 1).
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_sparsify_rcv(
    m: *const SvnnMatrix,
    p: f64,
    seed: u64,
    out: *mut *mut SvnnMatrix,
) -> SvnnStatus {
    guard(|| put(out, stochastic(as_ref(m, "matrix")?, Some(p), seed)?))
}

/// Largest eigenvalue by power iteration (relative tolerance 1e-10).
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_lambda_max(m: *const SvnnMatrix, out: *mut f64) -> SvnnStatus {
    guard(|| {
        let l = lambda_max(&as_ref(m, "matrix")?.inner, 1e-10);
        *out.as_mut().ok_or_else(|| null("out"))? = l;
        Ok(())
    })
}

/// `y = sum_k taps[k] C^k x`; `x` and `y` hold `n` doubles each.
///
/// # Safety
/// `m` must be a live handle; `taps` must hold `ntaps` doubles; `x` and `y`
/// must hold `n` doubles and may not overlap.
#[no_mangle]
pub unsafe extern "C" fn svnn_apply_filter(
    m: *const SvnnMatrix,
    taps: *const f64,
    ntaps: usize,
    x: *const f64,
    y: *mut f64,
    n: usize,
) -> SvnnStatus {
    guard(|| {
        let c = &as_ref(m, "matrix")?.inner;
        check_len(c.dim(), n)?;
        let h = FilterTaps::new(slice(taps, ntaps, "taps")?.to_vec())?;
        let result = apply_filter(&h, c, slice(x, n, "x")?)?;
        slice_mut(y, n, "y")?.copy_from_slice(&result);
        Ok(())
    })
}

/// Load the model from a training checkpoint (JSON).
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_model_load(
    file: *const c_char,
    out: *mut *mut SvnnModel,
) -> SvnnStatus {
    guard(|| {
        let t = TrainedModel::load_checkpoint(&path(file)?)?;
        put(out, SvnnModel { inner: t.model })
    })
}

/// 1 for regression, the class count for classification.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn svnn_model_num_outputs(
    model: *const SvnnModel,
    out: *mut usize,
) -> SvnnStatus {
    guard(|| {
        let k = as_ref(model, "model")?.inner.arch.task.outputs();
        *out.as_mut().ok_or_else(|| null("out"))? = k;
        Ok(())
    })
}

/// Forward pass for one sample: `x` holds `n * input_features` doubles
/// (node-major), `y` receives `y_len == num_outputs` values.
///
/// # Safety
/// Handles must be live; `x` and `y` must hold `x_len` and `y_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn svnn_model_forward(
    model: *const SvnnModel,
    m: *const SvnnMatrix,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> SvnnStatus {
    guard(|| {
        let model = &as_ref(model, "model")?.inner;
        let out = model.forward(&as_ref(m, "matrix")?.inner, slice(x, x_len, "x")?)?;
        check_len(out.len(), y_len)?;
        slice_mut(y, y_len, "y")?.copy_from_slice(&out);
        Ok(())
    })
}

/// Release a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svnn_model_free(model: *mut SvnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
