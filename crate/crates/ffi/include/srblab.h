#ifndef SRBLAB_H
#define SRBLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum SrbStatus {
  SRB_STATUS_OK = 0,
  SRB_STATUS_NULL_POINTER = 1,
  SRB_STATUS_INVALID_ARGUMENT = 2,
  SRB_STATUS_UNKNOWN_SYSTEM = 3,
  SRB_STATUS_NUMERICAL = 4,
  SRB_STATUS_BUFFER_TOO_SMALL = 5,
  SRB_STATUS_PANIC = 6,
} SrbStatus;

/**
 * A vector field from the built-in registry.
 */
typedef struct SrbSystem SrbSystem;

/**
 * Per-step expansion and recurrence data along one orbit.
 */
typedef struct SrbTrace SrbTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *srb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *srb_version(void);

/**
 * Looks up a system spec such as `"lorenz"` or `"diag(1,0.5,-2)"`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SrbStatus srb_system_new(const char *spec, struct SrbSystem **out);

/**
 * # Safety
 * `sys` must come from [`srb_system_new`] and not be used afterwards.
 */
void srb_system_free(struct SrbSystem *sys);

/**
 * Phase-space dimension, or 0 for a null handle.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
uintptr_t srb_system_dim(const struct SrbSystem *sys);

/**
 * `out = phi_t(x)` with the default integrator; `x` and `out` hold
 * `srb_system_dim(sys)` values.
 *
 * # Safety
 * Pointers must be valid for `dim` doubles.
 */
enum SrbStatus srb_advance(const struct SrbSystem *sys, const double *x, double t, double *out);

/**
 * Cocycle trace of `steps` time-one steps from `x` (default warm-up 20),
 * with recurrence measured at scale `delta`.
 *
 * # Safety
 * `x` must hold `dim` doubles; `out` must be valid.
 */
enum SrbStatus srb_trace_new(const struct SrbSystem *sys,
                             const double *x,
                             uintptr_t steps,
                             double delta,
                             struct SrbTrace **out);

/**
 * # Safety
 * `tr` must come from [`srb_trace_new`] and not be used afterwards.
 */
void srb_trace_free(struct SrbTrace *tr);

/**
 * Number of steps, or 0 for a null handle.
 *
 * # Safety
 * `tr` must be null or a live handle.
 */
uintptr_t srb_trace_len(const struct SrbTrace *tr);

/**
 * Copies the per-step log inverse norms `a_i`.
 *
 * # Safety
 * `out` must be valid for `cap` doubles; `len` must be valid.
 */
enum SrbStatus srb_trace_log_inverse_norms(const struct SrbTrace *tr,
                                           double *out,
                                           uintptr_t cap,
                                           uintptr_t *len);

/**
 * Per-step residual of the determinant identity.
 *
 * # Safety
 * `tr` and `out` must be valid.
 */
enum SrbStatus srb_trace_identity_residual(const struct SrbTrace *tr, double *out);

/**
 * Hyperbolic times of the trace (1-based indices).
 *
 * # Safety
 * `out` must be valid for `cap` elements; `tr` and `len` must be valid.
 */
enum SrbStatus srb_hyperbolic_times(const struct SrbTrace *tr,
                                    double c0,
                                    double delta0,
                                    double eps0,
                                    double lip_bound,
                                    uintptr_t kappa_min,
                                    uintptr_t *out,
                                    uintptr_t cap,
                                    uintptr_t *len);

/**
 * Pliss times of `a[0..n]` (1-based indices).
 *
 * # Safety
 * `a` must be valid for `n` doubles, `out` for `cap` elements.
 */
enum SrbStatus srb_pliss_times(const double *a,
                               uintptr_t n,
                               double a_max,
                               double c1,
                               double c2,
                               uintptr_t *out,
                               uintptr_t cap,
                               uintptr_t *len);

/**
 * Fraction of a seeded ensemble of `count` orbits that passes the
 * expansion test at rate `c0` over `n` time-one steps.
 *
 * # Safety
 * `sys` and `out` must be valid.
 */
enum SrbStatus srb_nue_pass_fraction(const struct SrbSystem *sys,
                                     uintptr_t count,
                                     uint64_t seed,
                                     double c0,
                                     uintptr_t n,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRBLAB_H */
