#ifndef SWITCHBENCH_H
#define SWITCHBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SbStatus {
  SB_STATUS_OK = 0,
  // A required pointer argument was null.
  SB_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  SB_STATUS_INVALID_UTF8 = 2,
  // Arguments were well-formed but rejected (bad level, non-finite data,
  // unidentifiable factor design, ...).
  SB_STATUS_INVALID_ARGUMENT = 3,
  // An index was outside the model list.
  SB_STATUS_OUT_OF_RANGE = 4,
  // The requested quantity is undefined for this input (e.g. R² of
  // effects with no variance).
  SB_STATUS_UNDEFINED = 5,
  // Reading or writing a file failed.
  SB_STATUS_IO = 6,
  // The run configuration could not be loaded or validated.
  SB_STATUS_CONFIG = 7,
  // A run or replay failed after starting.
  SB_STATUS_FAILED = 8,
  // The library panicked; this is a bug.
  SB_STATUS_PANIC = 9,
} SbStatus;

// Loaded run configuration (opaque).
typedef struct SbConfig SbConfig;

// Fitted additive factor model (opaque).
typedef struct SbFactorModel SbFactorModel;

// Counters from [`sb_run`].
typedef struct SbRunCounts {
  size_t planned;
  size_t skipped;
  size_t completed;
  size_t failed;
  uint64_t generation_calls;
} SbRunCounts;

// Outcome of [`sb_replay`].
typedef struct SbReplayResult {
  // Mean switched-minus-baseline score.
  double delta;
  // 95% BCa interval for `delta`.
  double ci_lo;
  double ci_hi;
  // Episodes replayed.
  size_t n;
  // Whether `delta` breaches the configured risk threshold.
  bool flagged;
} SbReplayResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sb_version(void);

// Message describing the calling thread's most recent failure, or null if
// the last call succeeded. Valid until the next library call on this thread.
const char *sb_last_error(void);

// Two-sided BCa interval for the mean of `samples[0..n]`.
//
// # Safety
// `samples` must point to `n` doubles; `lo` and `hi` must be writable.
enum SbStatus sb_bca_ci(const double *samples,
                        size_t n,
                        size_t resamples,
                        uint64_t seed,
                        double level,
                        double *lo,
                        double *hi);

// Token-overlap F1 of `prediction` against the best of `n_gold` references.
//
// # Safety
// `gold` must point to `n_gold` NUL-terminated strings.
enum SbStatus sb_token_f1(const char *prediction,
                          const char *const *gold,
                          size_t n_gold,
                          double *f1);

// Fits the additive model (with leave-one-out R²) to a `k`×`k` row-major
// matrix of switch effects. Row = prefix model, column = suffix model.
// Diagonal entries are ignored; NaN marks a missing cell.
//
// # Safety
// `names` must point to `k` strings and `values` to `k * k` doubles.
enum SbStatus sb_factor_fit(const char *const *names,
                            const double *values,
                            size_t k,
                            struct SbFactorModel **model);

// Fits the additive model to a delta table (CSV) or matrix file (JSON).
//
// # Safety
// `path` must be a NUL-terminated string.
enum SbStatus sb_factor_fit_file(const char *path, struct SbFactorModel **model);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from `sb_factor_fit*` and not be used afterwards.
void sb_factor_free(struct SbFactorModel *model);

// Number of models; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t sb_factor_len(const struct SbFactorModel *model);

// Name of model `i`, owned by the handle.
//
// # Safety
// `model` must be a live handle.
enum SbStatus sb_factor_name(const struct SbFactorModel *model, size_t i, const char **name);

// Grand mean μ.
//
// # Safety
// `model` must be a live handle.
enum SbStatus sb_factor_mu(const struct SbFactorModel *model, double *mu);

// Prefix influence α of model `i`.
//
// # Safety
// `model` must be a live handle.
enum SbStatus sb_factor_alpha(const struct SbFactorModel *model, size_t i, double *alpha);

// Suffix susceptibility β of model `i`.
//
// # Safety
// `model` must be a live handle.
enum SbStatus sb_factor_beta(const struct SbFactorModel *model, size_t i, double *beta);

// In-sample and leave-one-out R². Returns `SB_STATUS_UNDEFINED` (and
// writes nothing) if either is undefined.
//
// # Safety
// `model` must be a live handle.
enum SbStatus sb_factor_r2(const struct SbFactorModel *model, double *in_sample, double *loo);

// Loads and validates a run configuration (TOML). Relative paths inside
// resolve against the file's directory.
//
// # Safety
// `path` must be a NUL-terminated string.
enum SbStatus sb_config_load(const char *path, struct SbConfig **config);

// Releases a configuration. Null is ignored.
//
// # Safety
// `config` must come from `sb_config_load` and not be used afterwards.
void sb_config_free(struct SbConfig *config);

// Runs (or resumes) the switch matrix described by `config`.
//
// # Safety
// `config` must be a live handle and `counts` writable.
enum SbStatus sb_run(const struct SbConfig *config, struct SbRunCounts *counts);

// Replays `prefix`'s cached conversations through `candidate` and
// estimates the drift of switching.
//
// # Safety
// `config` must be a live handle; strings NUL-terminated; `result` writable.
enum SbStatus sb_replay(const struct SbConfig *config,
                        const char *prefix,
                        const char *candidate,
                        struct SbReplayResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWITCHBENCH_H */
