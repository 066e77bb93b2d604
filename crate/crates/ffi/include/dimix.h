#ifndef DIMIX_H
#define DIMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DimixStatus {
  DIMIX_STATUS_OK = 0,
  DIMIX_STATUS_NULL_POINTER = 1,
  DIMIX_STATUS_INVALID_ARGUMENT = 2,
  DIMIX_STATUS_CONFIG = 3,
  DIMIX_STATUS_DIVERGED = 4,
  DIMIX_STATUS_SINGULAR = 5,
  DIMIX_STATUS_BELOW_THRESHOLD = 6,
  DIMIX_STATUS_IO = 7,
  DIMIX_STATUS_BUFFER_TOO_SMALL = 8,
  DIMIX_STATUS_PANIC = 9,
} DimixStatus;

typedef enum DimixMetric {
  DIMIX_METRIC_LOSS_POOLED = 0,
  DIMIX_METRIC_LOSS_WEIGHTED = 1,
  DIMIX_METRIC_DEVIATION_SQ = 2,
  DIMIX_METRIC_DIST_OPT_SQ = 3,
} DimixMetric;

/**
 * A configured experiment: network, objectives, noise and step sizes.
 */
typedef struct DimixExperiment DimixExperiment;

/**
 * Metrics of one run.
 */
typedef struct DimixTrace DimixTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dimix_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *dimix_last_error_message(void);

/**
 * Builds an experiment from TOML config text.
 *
 * # Safety
 * `config_toml` must be a valid NUL-terminated string and `out` a valid
 * pointer to writable storage.
 */
enum DimixStatus dimix_experiment_new(const char *config_toml, struct DimixExperiment **out);

/**
 * # Safety
 * `exp` must be NULL or a handle from [`dimix_experiment_new`] not yet freed.
 */
void dimix_experiment_free(struct DimixExperiment *exp);

/**
 * Number of agents and state dimension.
 *
 * # Safety
 * `exp` must be a live handle; `n` and `d` valid writable pointers.
 */
enum DimixStatus dimix_experiment_shape(const struct DimixExperiment *exp, size_t *n, size_t *d);

/**
 * Copies the optimum `x*` into `buf` (length at least `d`).
 *
 * # Safety
 * `exp` must be a live handle and `buf` valid for `len` writes.
 */
enum DimixStatus dimix_experiment_optimum(const struct DimixExperiment *exp,
                                          double *buf,
                                          size_t len);

/**
 * Checks the mixing schedule for `horizon` iterations; `passed` receives
 * 1 or 0.
 *
 * # Safety
 * `exp` must be a live handle and `passed` a valid writable pointer.
 */
enum DimixStatus dimix_experiment_validate(const struct DimixExperiment *exp,
                                           uint64_t horizon,
                                           int32_t *passed);

/**
 * Runs `horizon` iterations with the given seed. A diverged run still
 * yields a trace, flagged by [`dimix_trace_aborted`].
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid writable pointer.
 */
enum DimixStatus dimix_experiment_run(const struct DimixExperiment *exp,
                                      uint64_t horizon,
                                      uint64_t seed,
                                      struct DimixTrace **out);

/**
 * # Safety
 * `trace` must be NULL or a handle from [`dimix_experiment_run`] not yet freed.
 */
void dimix_trace_free(struct DimixTrace *trace);

/**
 * Number of recorded iterations (0 for NULL).
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
size_t dimix_trace_len(const struct DimixTrace *trace);

/**
 * 1 if the run diverged before its horizon, 0 otherwise.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
int32_t dimix_trace_aborted(const struct DimixTrace *trace);

/**
 * Copies one metric series (entry `k` is iteration `k+1`) into `buf`.
 *
 * # Safety
 * `trace` must be a live handle and `buf` valid for `len` writes.
 */
enum DimixStatus dimix_trace_metric(const struct DimixTrace *trace,
                                    enum DimixMetric metric,
                                    double *buf,
                                    size_t len);

/**
 * Stochastic `s`-level quantization of `x` into `out`, seeded.
 *
 * # Safety
 * `x` must be valid for `len` reads and `out` for `len` writes.
 */
enum DimixStatus dimix_quantize(const double *x,
                                size_t len,
                                uint32_t levels,
                                uint64_t seed,
                                double *out);

/**
 * The quantizer's level draw `ζ(t, s)` with an explicit uniform `u`.
 *
 * # Safety
 * `out` must be a valid writable pointer.
 */
enum DimixStatus dimix_zeta(double t, uint32_t levels, double u, uint32_t *out);

/**
 * The sum-bound constant `A(a, σ, δ)`.
 *
 * # Safety
 * `out` must be a valid writable pointer.
 */
enum DimixStatus dimix_a_constant(double a, double sigma, double delta, double *out);

/**
 * Runs every randomized lemma check; `violations` receives the total.
 *
 * # Safety
 * `violations` must be a valid writable pointer.
 */
enum DimixStatus dimix_lemma_suite(uint64_t seed, uint64_t instances, size_t *violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIMIX_H */
