#ifndef SCGL_H
#define SCGL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScglStatus {
  SCGL_STATUS_OK = 0,
  SCGL_STATUS_NULL_POINTER = 1,
  SCGL_STATUS_INVALID_ARGUMENT = 2,
  SCGL_STATUS_CONFIG = 3,
  SCGL_STATUS_GRID_MISMATCH = 4,
  SCGL_STATUS_BLOW_UP = 5,
  SCGL_STATUS_FORMAT = 6,
  SCGL_STATUS_IO = 7,
  SCGL_STATUS_PANIC = 8,
} ScglStatus;

/**
 * Fourier coefficients on the ball `|m| ≤ n`.
 */
typedef struct ScglField ScglField;

/**
 * One solver replica.
 */
typedef struct ScglSolver ScglSolver;

typedef struct ScglComplex {
  double re;
  double im;
} ScglComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *scgl_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *scgl_version(void);

/**
 * Renormalization constant `c_n` at viscosity `mu`.
 *
 * # Safety
 * `out_c` must be valid for writes.
 */
enum ScglStatus scgl_renorm_constant(size_t n, double mu, double *out_c);

/**
 * Complex Hermite polynomial `H_{k,l}(z, c)`.
 *
 * # Safety
 * `out_h` must be valid for writes.
 */
enum ScglStatus scgl_hermite(size_t k,
                             size_t l,
                             struct ScglComplex z,
                             double c,
                             struct ScglComplex *out_h);

/**
 * Zero field with cutoff `n` on `points²` collocation points (`0` selects
 * `4n + 4`).
 *
 * # Safety
 * `out_field` must be valid for writes.
 */
enum ScglStatus scgl_field_new(size_t n, size_t points, struct ScglField **out_field);

/**
 * # Safety
 * `field` must come from this library and not be used afterwards.
 */
void scgl_field_free(struct ScglField *field);

/**
 * Cutoff `n` of a field, `0` for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t scgl_field_cutoff(const struct ScglField *field);

/**
 * # Safety
 * `field` must be a live handle.
 */
enum ScglStatus scgl_field_set(struct ScglField *field,
                               int32_t m1,
                               int32_t m2,
                               struct ScglComplex value);

/**
 * Coefficient at `(m1, m2)`; zero outside the ball.
 *
 * # Safety
 * `field` must be a live handle and `out_value` valid for writes.
 */
enum ScglStatus scgl_field_get(const struct ScglField *field,
                               int32_t m1,
                               int32_t m2,
                               struct ScglComplex *out_value);

/**
 * `‖f‖_{B^alpha_{p,q}}`; pass `INFINITY` for `p` or `q` to get the sup.
 *
 * # Safety
 * `field` must be a live handle and `out_norm` valid for writes.
 */
enum ScglStatus scgl_field_besov_norm(const struct ScglField *field,
                                      double alpha,
                                      double p,
                                      double q,
                                      double *out_norm);

/**
 * Writes a binary snapshot.
 *
 * # Safety
 * `field` must be a live handle and `path` a NUL-terminated string.
 */
enum ScglStatus scgl_field_write_snapshot(const struct ScglField *field,
                                          const char *path,
                                          double t,
                                          uint64_t seed);

/**
 * Reads a binary snapshot into a new field. `out_t` and `out_seed` may be
 * null.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_field` valid for writes.
 */
enum ScglStatus scgl_field_read_snapshot(const char *path,
                                         struct ScglField **out_field,
                                         double *out_t,
                                         uint64_t *out_seed);

/**
 * Solver for one replica, configured by a TOML string.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out_solver` valid for
 * writes.
 */
enum ScglStatus scgl_solver_new(const char *config_toml,
                                uint64_t replica,
                                struct ScglSolver **out_solver);

/**
 * # Safety
 * `solver` must come from this library and not be used afterwards.
 */
void scgl_solver_free(struct ScglSolver *solver);

/**
 * Advances `steps` time steps. Stops at the first failure.
 *
 * # Safety
 * `solver` must be a live handle.
 */
enum ScglStatus scgl_solver_advance(struct ScglSolver *solver, uint64_t steps);

/**
 * Current time.
 *
 * # Safety
 * `solver` must be a live handle and `out_t` valid for writes.
 */
enum ScglStatus scgl_solver_time(const struct ScglSolver *solver, double *out_t);

/**
 * Copy of the current solution `u` as a new field.
 *
 * # Safety
 * `solver` must be a live handle and `out_field` valid for writes.
 */
enum ScglStatus scgl_solver_solution(const struct ScglSolver *solver, struct ScglField **out_field);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCGL_H */
