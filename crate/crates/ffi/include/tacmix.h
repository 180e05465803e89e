#ifndef TACMIX_H
#define TACMIX_H

/* Generated by cbindgen from the tacmix-ffi crate; regenerate by building the crate. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call in this ABI.
 */
typedef enum TacmixStatus {
  /**
   * The call succeeded and all out-parameters are valid.
   */
  TacmixStatus_Ok = 0,
  /**
   * A computation failed to converge or left the representable range.
   */
  TacmixStatus_NumericalError = 1,
  /**
   * Arguments were malformed: null pointers, bad bounds, or shape errors.
   */
  TacmixStatus_InvalidInput = 2,
} TacmixStatus;

/**
 * Collection of input/output episodes sharing one sampling interval.
 */
typedef struct TacmixDataset TacmixDataset;

/**
 * Uniform rectangular grid of candidate parameter nodes.
 */
typedef struct TacmixGrid TacmixGrid;

/**
 * Probability weights on the nodes of a grid.
 */
typedef struct TacmixMeasure TacmixMeasure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *tacmix_version(void);

/**
 * Returns the calling thread's last error message, or an empty string.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *tacmix_last_error(void);

/**
 * Creates a uniform `m1` x `m2` grid on `[q1_min, q1_max] x [q2_min, q2_max]`.
 *
 * # Safety
 * `out` must be a valid pointer. On `Ok` it receives a handle to release
 * with [`tacmix_grid_free`].
 */
enum TacmixStatus tacmix_grid_new(double q1_min,
                                  double q1_max,
                                  double q2_min,
                                  double q2_max,
                                  size_t m1,
                                  size_t m2,
                                  struct TacmixGrid **out);

/**
 * Releases a grid handle. Null is ignored.
 *
 * # Safety
 * `grid` must be null or a pointer returned by [`tacmix_grid_new`] that has
 * not been freed already.
 */
void tacmix_grid_free(struct TacmixGrid *grid);

/**
 * Creates an empty dataset whose episodes are sampled every `tau` time
 * units.
 *
 * # Safety
 * `out` must be a valid pointer. On `Ok` it receives a handle to release
 * with [`tacmix_dataset_free`].
 */
enum TacmixStatus tacmix_dataset_new(double tau, struct TacmixDataset **out);

/**
 * Appends one episode with `len` input and measured-output samples.
 *
 * # Safety
 * `dataset` must be a live handle; `id` must be a NUL-terminated string;
 * `input` and `output` must point to `len` readable doubles.
 */
enum TacmixStatus tacmix_dataset_add_episode(struct TacmixDataset *dataset,
                                             const char *id,
                                             const double *input,
                                             const double *output,
                                             size_t len);

/**
 * Releases a dataset handle. Null is ignored.
 *
 * # Safety
 * `dataset` must be null or a pointer returned by [`tacmix_dataset_new`]
 * that has not been freed already.
 */
void tacmix_dataset_free(struct TacmixDataset *dataset);

/**
 * Simulates the forward model for parameters `(q1, q2)` on one input
 * signal, writing one output sample per input sample.
 *
 * # Safety
 * `input` must point to `len` readable doubles and `out_values` to `len`
 * writable doubles.
 */
enum TacmixStatus tacmix_simulate(double q1,
                                  double q2,
                                  size_t n_intervals,
                                  double tau,
                                  const double *input,
                                  size_t len,
                                  double *out_values);

/**
 * Fits node weights to the dataset by regularized least squares on the
 * probability simplex.
 *
 * Diagnostics pointers may be null. If the solver stops at its iteration
 * cap, the fitted measure is still returned: with a non-null
 * `out_converged` the call reports `Ok` and writes `false`; with a null
 * `out_converged` it reports `NumericalError` so the caller cannot miss the
 * condition.
 *
 * # Safety
 * `dataset` and `grid` must be live handles; `out_measure` must be a valid
 * pointer, and on `Ok` it receives a handle to release with
 * [`tacmix_measure_free`].
 */
enum TacmixStatus tacmix_estimate(const struct TacmixDataset *dataset,
                                  const struct TacmixGrid *grid,
                                  size_t n_intervals,
                                  double w1,
                                  double w2,
                                  struct TacmixMeasure **out_measure,
                                  double *out_objective,
                                  size_t *out_iterations,
                                  bool *out_converged);

/**
 * Number of grid nodes carried by a measure; 0 for a null handle.
 *
 * # Safety
 * `measure` must be null or a live handle.
 */
size_t tacmix_measure_len(const struct TacmixMeasure *measure);

/**
 * Reads node `j` of a measure: its coordinates and probability weight.
 *
 * # Safety
 * `measure` must be a live handle; `out_q1`, `out_q2`, and `out_weight`
 * must be valid pointers.
 */
enum TacmixStatus tacmix_measure_get(const struct TacmixMeasure *measure,
                                     size_t j,
                                     double *out_q1,
                                     double *out_q2,
                                     double *out_weight);

/**
 * Releases a measure handle. Null is ignored.
 *
 * # Safety
 * `measure` must be null or a pointer produced by this library that has
 * not been freed already.
 */
void tacmix_measure_free(struct TacmixMeasure *measure);

/**
 * Draws `count` Metropolis samples from the spline-refined density of a
 * measure, writing interleaved `q1,q2` pairs (2 x `count` doubles).
 *
 * The chain runs `burn_in + count * thin` steps from the given seed; equal
 * arguments reproduce the samples bit for bit.
 *
 * # Safety
 * `measure` must be a live handle and `out_points` must point to
 * `2 * count` writable doubles.
 */
enum TacmixStatus tacmix_sample(const struct TacmixMeasure *measure,
                                size_t refine_factor,
                                size_t count,
                                size_t thin,
                                size_t burn_in,
                                uint64_t seed,
                                double *out_points);

/**
 * Two-sample two-dimensional Kolmogorov-Smirnov test on interleaved
 * `q1,q2` pairs (`a` holds `2 x a_len` doubles, likewise `b`).
 *
 * # Safety
 * `a` and `b` must point to `2 x a_len` and `2 x b_len` readable doubles;
 * `out_d` and `out_p` must be valid pointers.
 */
enum TacmixStatus tacmix_ks2d2s(const double *a,
                                size_t a_len,
                                const double *b,
                                size_t b_len,
                                double *out_d,
                                double *out_p);

/**
 * Kolmogorov distribution CDF at `z`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TacmixStatus tacmix_kolmogorov_cdf(double z, double *out);

/**
 * Prohorov distance between two measures, scanned at `resolution` steps
 * and capped at 1.
 *
 * # Safety
 * `p` and `q` must be live handles and `out` a valid pointer.
 */
enum TacmixStatus tacmix_prohorov_distance(const struct TacmixMeasure *p,
                                           const struct TacmixMeasure *q,
                                           double resolution,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TACMIX_H */
