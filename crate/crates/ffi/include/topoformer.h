#ifndef TOPOFORMER_H
#define TOPOFORMER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum TfStatus {
  TF_STATUS_OK = 0,
  // A required pointer argument was null.
  TF_STATUS_NULL_POINTER = 1,
  // Bad argument value, including non-UTF-8 strings and short buffers.
  TF_STATUS_INVALID_ARGUMENT = 2,
  // File could not be read or written.
  TF_STATUS_IO = 3,
  // Malformed JSON, file format or mismatched shapes between objects.
  TF_STATUS_SCHEMA = 4,
  // Singular system, solver or optimizer failure, non-finite values.
  TF_STATUS_NUMERICAL = 5,
  // A Rust panic was caught; the handle involved should be discarded.
  TF_STATUS_PANIC = 6,
} TfStatus;

// A loaded surrogate model.
typedef struct TfModel TfModel;

// A validated problem definition.
typedef struct TfProblem TfProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tf_version(void);

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length excluding the NUL,
// so a caller can size a buffer with a first call using `cap = 0`.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t tf_last_error(char *buf, size_t cap);

// Parse a problem from JSON. `config_json` is an optional generator config
// (solver, optimizer and dynamics settings); null means defaults.
//
// # Safety
// String arguments must be null or NUL-terminated; `out` must be writable.
enum TfStatus tf_problem_from_json(const char *spec_json,
                                   const char *config_json,
                                   struct TfProblem **out);

// # Safety
// `p` must be null or a handle from [`tf_problem_from_json`] not yet freed.
void tf_problem_free(struct TfProblem *p);

// Grid size and whether the load is time-varying.
//
// # Safety
// `p` must be a live problem handle; output pointers may be null.
enum TfStatus tf_problem_info(const struct TfProblem *p,
                              size_t *nelx,
                              size_t *nely,
                              bool *is_dynamic);

// Normalized strain-energy-density and von Mises fields of the solid domain.
//
// # Safety
// `p` must be a live problem handle; `sed` and `vm` must each hold `len` doubles.
enum TfStatus tf_problem_fields(const struct TfProblem *p, double *sed, double *vm, size_t len);

// Run the optimizer. Writes the converged soft density to `density` and,
// when `binary` is non-null, the volume-matched 0/1 design to `binary`.
//
// # Safety
// `p` must be a live problem handle; non-null buffers must hold `len`
// doubles; `iterations` and `converged` may be null.
enum TfStatus tf_optimize(const struct TfProblem *p,
                          double *density,
                          double *binary,
                          size_t len,
                          size_t *iterations,
                          bool *converged);

// Load a checkpoint written by training or fine-tuning.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum TfStatus tf_model_load(const char *path, struct TfModel **out);

// # Safety
// `m` must be null or a handle from [`tf_model_load`] not yet freed.
void tf_model_free(struct TfModel *m);

// Square grid side the model predicts and whether it takes dynamic conditions.
//
// # Safety
// `m` must be a live model handle; output pointers may be null.
enum TfStatus tf_model_info(const struct TfModel *m, size_t *grid, bool *is_dynamic);

// Predict the soft density of a problem. The model grid and condition width
// must match the problem, otherwise [`TfStatus::Schema`].
//
// # Safety
// Handles must be live; `density` must hold `len` doubles.
enum TfStatus tf_model_predict(const struct TfModel *m,
                               const struct TfProblem *p,
                               double *density,
                               size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOFORMER_H */
