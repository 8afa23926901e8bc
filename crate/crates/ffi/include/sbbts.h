#ifndef SBBTS_H
#define SBBTS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of Heston parameters written by `sbbts_heston_qmle`:
 * `kappa, theta, xi_vol, rho, r, v0`.
 */
#define SBBTS_HESTON_PARAMS 6

/**
 * Status codes. Zero is success.
 */
typedef enum {
  SBBTS_STATUS_OK = 0,
  SBBTS_STATUS_NULL_POINTER = 1,
  SBBTS_STATUS_INVALID_ARGUMENT = 2,
  SBBTS_STATUS_BUFFER_TOO_SMALL = 3,
  SBBTS_STATUS_DIMENSION = 10,
  SBBTS_STATUS_CONFIG = 11,
  SBBTS_STATUS_DOMAIN = 12,
  SBBTS_STATUS_DATA = 13,
  SBBTS_STATUS_CONTRACT = 14,
  SBBTS_STATUS_SCHEMA = 15,
  SBBTS_STATUS_TRAINING = 16,
  SBBTS_STATUS_ESTIMATION = 17,
  SBBTS_STATUS_NUMERICAL = 18,
  SBBTS_STATUS_VERSION = 19,
  SBBTS_STATUS_IO = 20,
  SBBTS_STATUS_PANIC = 99,
} SbbtsStatus;

/**
 * Trained generator.
 */
typedef struct SbbtsModel SbbtsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sbbts_version(void);

/**
 * Message of the last failure on this thread, or null if there was none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *sbbts_last_error(void);

/**
 * Trains a generator on `n_paths × n_dates × dim` values. `config_toml`
 * holds the generator settings as TOML and may be null for defaults.
 *
 * # Safety
 * `values` must point to `n_paths·n_dates·dim` doubles, `config_toml` must be
 * null or NUL-terminated, and `out` must be writable.
 */
SbbtsStatus sbbts_model_train(const double *values,
                              size_t n_paths,
                              size_t n_dates,
                              size_t dim,
                              const char *config_toml,
                              uint64_t seed,
                              SbbtsModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
SbbtsStatus sbbts_model_load(const char *path, SbbtsModel **out);

/**
 * Writes a checkpoint file.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
SbbtsStatus sbbts_model_save(const SbbtsModel *model, const char *path);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void sbbts_model_free(SbbtsModel *model);

/**
 * Path dimension of a model, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t sbbts_model_dim(const SbbtsModel *model);

/**
 * Number of dates per generated path, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t sbbts_model_n_dates(const SbbtsModel *model);

/**
 * Generates `n_paths` paths into `out`, which holds `out_len` doubles and
 * must have room for `n_paths·n_dates·dim`. Same seed, same output as the
 * `generate` command.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to `out_len` doubles.
 */
SbbtsStatus sbbts_model_generate(const SbbtsModel *model,
                                 size_t n_paths,
                                 uint64_t seed,
                                 double *out,
                                 size_t out_len);

/**
 * Heston quasi-maximum-likelihood fit of one path of prices `x` and
 * variances `v` observed every `dt`. Writes `SBBTS_HESTON_PARAMS` values.
 *
 * # Safety
 * `x` and `v` must point to `n` doubles, `out_params` to six.
 */
SbbtsStatus sbbts_heston_qmle(const double *x,
                              const double *v,
                              size_t n,
                              double dt,
                              double *out_params);

/**
 * Historical value at risk and expected shortfall at `level` (e.g. 0.95),
 * both reported as positive loss magnitudes.
 *
 * # Safety
 * `returns` must point to `n` doubles; `out_var` and `out_es` writable.
 */
SbbtsStatus sbbts_var_es(const double *returns,
                         size_t n,
                         double level,
                         double *out_var,
                         double *out_es);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SBBTS_H */
