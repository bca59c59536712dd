#ifndef MERTON_H
#define MERTON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MertonStatus {
  MERTON_STATUS_OK = 0,
  MERTON_STATUS_NULL_POINTER = 1,
  MERTON_STATUS_INVALID_STRING = 2,
  MERTON_STATUS_CONFIG = 3,
  MERTON_STATUS_MISSING_INPUT = 4,
  MERTON_STATUS_NUMERICAL = 5,
  MERTON_STATUS_IO = 6,
  MERTON_STATUS_INVALID_ARGUMENT = 7,
  MERTON_STATUS_PANIC = 8,
} MertonStatus;

/**
 * Outcome of the rate-field fixed point.
 */
typedef enum MertonConvergence {
  MERTON_CONVERGENCE_CONVERGED = 0,
  MERTON_CONVERGENCE_NOISE_FLOOR = 1,
  MERTON_CONVERGENCE_DIVERGED = 2,
} MertonConvergence;

typedef enum MertonKind {
  MERTON_KIND_SUBGAME = 0,
  MERTON_KIND_PRECOMMITMENT = 1,
} MertonKind;

/**
 * Validated run configuration.
 */
typedef struct MertonConfig MertonConfig;

/**
 * Utility-weighted discount rate on its grid.
 */
typedef struct MertonRateField MertonRateField;

/**
 * Investment and consumption surfaces of one agent.
 */
typedef struct MertonStrategy MertonStrategy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *merton_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *merton_version(void);

/**
 * Parses and validates a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MertonStatus merton_config_from_toml(const char *toml, struct MertonConfig **out);

/**
 * Shipped preset, `"constant"` or `"cev"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MertonStatus merton_config_preset(const char *name, struct MertonConfig **out);

/**
 * Sets the random seed.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum MertonStatus merton_config_set_seed(struct MertonConfig *cfg, uint64_t seed);

/**
 * Writes the canonical TOML of `cfg` into `buf` (capacity `len`, NUL included)
 * and the required capacity into `needed`.
 *
 * # Safety
 * `cfg` must be a live handle, `buf` valid for `len` bytes or null with `len == 0`.
 */
enum MertonStatus merton_config_to_toml(const struct MertonConfig *cfg,
                                        char *buf,
                                        size_t len,
                                        size_t *needed);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void merton_config_free(struct MertonConfig *cfg);

/**
 * Solves the fixed point for the rate field.
 *
 * # Safety
 * `cfg` must be a live handle; `out` valid; `status` null or valid.
 */
enum MertonStatus merton_solve_q(const struct MertonConfig *cfg,
                                 struct MertonRateField **out,
                                 enum MertonConvergence *status);

/**
 * Reads a rate field previously written as CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum MertonStatus merton_rate_field_read_csv(const char *path, struct MertonRateField **out);

/**
 * Writes the rate field as `t,y,z,q` CSV.
 *
 * # Safety
 * `q` must be a live handle and `path` a NUL-terminated string.
 */
enum MertonStatus merton_rate_field_write_csv(const struct MertonRateField *q, const char *path);

/**
 * Interpolated rate at time `t` and price `z > 0`.
 *
 * # Safety
 * `q` must be a live handle and `out` valid.
 */
enum MertonStatus merton_rate_field_value(const struct MertonRateField *q,
                                          double t,
                                          double z,
                                          double *out);

/**
 * Number of time and price nodes.
 *
 * # Safety
 * `q` must be a live handle; `n_t`, `n_y` valid.
 */
enum MertonStatus merton_rate_field_dims(const struct MertonRateField *q, size_t *n_t, size_t *n_y);

/**
 * # Safety
 * `q` must be null or a handle not yet freed.
 */
void merton_rate_field_free(struct MertonRateField *q);

/**
 * Solves the value-function PDE of one agent. `q` is required for the
 * subgame agent and ignored for the precommitted one.
 *
 * # Safety
 * `cfg` must be a live handle, `q` null or live, `out` valid.
 */
enum MertonStatus merton_solve_strategy(const struct MertonConfig *cfg,
                                        const struct MertonRateField *q,
                                        enum MertonKind kind,
                                        struct MertonStrategy **out);

/**
 * Investment fraction, consumption rate and `v` at `(t, z)`.
 * Any of the output pointers may be null.
 *
 * # Safety
 * `s` must be a live handle; non-null outputs must be valid.
 */
enum MertonStatus merton_strategy_at(const struct MertonStrategy *s,
                                     double t,
                                     double z,
                                     double *pi,
                                     double *c,
                                     double *v);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void merton_strategy_free(struct MertonStrategy *s);

/**
 * Checks the PDE solver against the constant-coefficient closed form at time
 * step `dt` on the market of `cfg` (the constant preset when `cfg` is null or
 * not a constant market) and reports the largest relative error of `v`.
 *
 * # Safety
 * `cfg` must be null or live; `max_rel_error` must be valid.
 */
enum MertonStatus merton_self_test(const struct MertonConfig *cfg,
                                   double dt,
                                   double *max_rel_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MERTON_H */
