#ifndef SVNN_H
#define SVNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvnnStatus {
  SVNN_STATUS_OK = 0,
  SVNN_STATUS_NULL_POINTER = 1,
  SVNN_STATUS_INVALID_ARGUMENT = 2,
  SVNN_STATUS_DIMENSION_MISMATCH = 3,
  // Eigensolver failure, non-PSD input, or diverged training.
  SVNN_STATUS_NUMERICAL = 4,
  SVNN_STATUS_IO = 5,
  SVNN_STATUS_PARSE = 6,
  // A Rust panic was caught; the library state is still usable.
  SVNN_STATUS_PANIC = 7,
} SvnnStatus;

typedef enum SvnnThreshold {
  SVNN_THRESHOLD_HARD = 0,
  SVNN_THRESHOLD_SOFT = 1,
} SvnnThreshold;

// Symmetric covariance matrix (dense or sparse storage).
typedef struct SvnnMatrix SvnnMatrix;

// Trained VNN loaded from a checkpoint.
typedef struct SvnnModel SvnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *svnn_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *svnn_last_error(void);

// Copy an `n x n` row-major symmetric matrix into a new handle.
//
// # Safety
// `data` must point to `n * n` doubles; `out` must be writable.
enum SvnnStatus svnn_matrix_from_dense(size_t n, const double *data, struct SvnnMatrix **out);

// Read a matrix in the text format (dense or sparse header).
//
// # Safety
// `file` must be a NUL-terminated string; `out` must be writable.
enum SvnnStatus svnn_matrix_read(const char *file, struct SvnnMatrix **out);

// # Safety
// `m` must be a live handle and `file` a NUL-terminated string.
enum SvnnStatus svnn_matrix_write(const struct SvnnMatrix *m, const char *file);

// # Safety
// `m` must be a live handle; `out` must be writable.
enum SvnnStatus svnn_matrix_dim(const struct SvnnMatrix *m, size_t *out);

// Stored entries, both triangles and the diagonal.
//
// # Safety
// `m` must be a live handle; `out` must be writable.
enum SvnnStatus svnn_matrix_nnz(const struct SvnnMatrix *m, size_t *out);

// Write the matrix row-major into `out`, which holds `len == n * n` doubles.
//
// # Safety
// `m` must be a live handle; `out` must point to `len` doubles.
enum SvnnStatus svnn_matrix_to_dense(const struct SvnnMatrix *m, double *out, size_t len);

// Release a matrix. NULL is ignored.
//
// # Safety
// `m` must be NULL or a handle not yet freed.
void svnn_matrix_free(struct SvnnMatrix *m);

// Sample covariance (1/t normalization) of `t` samples of `n` variables,
// row-major in `x`.
//
// # Safety
// `x` must point to `t * n` doubles; `out` must be writable.
enum SvnnStatus svnn_sample_covariance(const double *x,
                                       size_t t,
                                       size_t n,
                                       struct SvnnMatrix **out);

// Threshold an estimate built from `t` samples at `tau / sqrt(t)`; the
// diagonal is kept.
//
// # Safety
// `m` must be a live handle; `out` must be writable.
enum SvnnStatus svnn_threshold(const struct SvnnMatrix *m,
                               size_t t,
                               double tau,
                               enum SvnnThreshold kind,
                               struct SvnnMatrix **out);

// One ACV draw: keep `c_ij` with probability `|c_ij| / max |c_ij|`.
//
// # Safety
// `m` must be a live handle; `out` must be writable.
enum SvnnStatus svnn_sparsify_acv(const struct SvnnMatrix *m,
                                  uint64_t seed,
                                  struct SvnnMatrix **out);

// One RCV draw with mean keep probability `p` in (0, 1).
//
// # Safety
// `m` must be a live handle; `out` must be writable.
enum SvnnStatus svnn_sparsify_rcv(const struct SvnnMatrix *m,
                                  double p,
                                  uint64_t seed,
                                  struct SvnnMatrix **out);

// Largest eigenvalue by power iteration (relative tolerance 1e-10).
//
// # Safety
// `m` must be a live handle; `out` must be writable.
enum SvnnStatus svnn_lambda_max(const struct SvnnMatrix *m, double *out);

// `y = sum_k taps[k] C^k x`; `x` and `y` hold `n` doubles each.
//
// # Safety
// `m` must be a live handle; `taps` must hold `ntaps` doubles; `x` and `y`
// must hold `n` doubles and may not overlap.
enum SvnnStatus svnn_apply_filter(const struct SvnnMatrix *m,
                                  const double *taps,
                                  size_t ntaps,
                                  const double *x,
                                  double *y,
                                  size_t n);

// Load the model from a training checkpoint (JSON).
//
// # Safety
// `file` must be a NUL-terminated string; `out` must be writable.
enum SvnnStatus svnn_model_load(const char *file, struct SvnnModel **out);

// 1 for regression, the class count for classification.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum SvnnStatus svnn_model_num_outputs(const struct SvnnModel *model, size_t *out);

// Forward pass for one sample: `x` holds `n * input_features` doubles
// (node-major), `y` receives `y_len == num_outputs` values.
//
// # Safety
// Handles must be live; `x` and `y` must hold `x_len` and `y_len` doubles.
enum SvnnStatus svnn_model_forward(const struct SvnnModel *model,
                                   const struct SvnnMatrix *m,
                                   const double *x,
                                   size_t x_len,
                                   double *y,
                                   size_t y_len);

// Release a model. NULL is ignored.
//
// # Safety
// `model` must be NULL or a handle not yet freed.
void svnn_model_free(struct SvnnModel *model);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SVNN_H */
