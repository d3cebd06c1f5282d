#ifndef SENSLAB_H
#define SENSLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes of every fallible call.
 */
typedef enum {
  SENSLAB_STATUS_OK = 0,
  SENSLAB_STATUS_NULL_POINTER = 1,
  SENSLAB_STATUS_INVALID_UTF8 = 2,
  SENSLAB_STATUS_INVALID_ARGUMENT = 3,
  SENSLAB_STATUS_INVALID_ETA = 4,
  SENSLAB_STATUS_SHAPE_MISMATCH = 5,
  SENSLAB_STATUS_NON_FINITE = 6,
  SENSLAB_STATUS_ENUMERATION_GUARD = 7,
  SENSLAB_STATUS_OVERFLOW = 8,
  SENSLAB_STATUS_UNBOUNDED_SENSITIVITY = 9,
  SENSLAB_STATUS_UNKNOWN_ESTIMATOR = 10,
  SENSLAB_STATUS_UNKNOWN_ADVERSARY = 11,
  SENSLAB_STATUS_UNSUPPORTED = 12,
  SENSLAB_STATUS_INSUFFICIENT_POINTS = 13,
  SENSLAB_STATUS_BUFFER_TOO_SMALL = 14,
  SENSLAB_STATUS_PANIC = 15,
} SenslabStatus;

/*
 Opaque dataset handle.
 */
typedef struct SenslabDataset SenslabDataset;

/*
 Opaque estimator handle.
 */
typedef struct SenslabEstimator SenslabEstimator;

/*
 Opaque sensitivity report handle.
 */
typedef struct SenslabReport SenslabReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *senslab_last_error(void);

/*
 Frees a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void senslab_string_free(char *s);

/*
 Number of corrupted rows `floor(eta * n)`.

 # Safety
 `k_out` must be a valid pointer.
 */
SenslabStatus senslab_compute_k(double eta, size_t n, size_t *k_out);

/*
 Total variation between `N(0, 1)` and `N(eta, 1)`.
 */
double senslab_tv_gaussian_shift(double eta);

/*
 Chi-square bound of the local-shift mixture.

 # Safety
 `value_out` must be a valid pointer.
 */
SenslabStatus senslab_chi2_localshift_bound(size_t k, size_t n, double delta, double *value_out);

/*
 Builds a dataset from `n * d` row-major values.

 # Safety
 `values` must point to `n * d` doubles; `dataset_out` must be valid.
 */
SenslabStatus senslab_dataset_new(size_t n,
                                  size_t d,
                                  const double *values,
                                  SenslabDataset **dataset_out);

/*
 Frees a dataset. Null is ignored.

 # Safety
 `dataset` must come from [`senslab_dataset_new`] and not be freed twice.
 */
void senslab_dataset_free(SenslabDataset *dataset);

/*
 Resolves a registry estimator (`mean`, `median`, `clipped-mean`, ...).
 Clipped estimators use the interval `[clip_lo, clip_hi]`.

 # Safety
 `name` must be a nul-terminated string; `estimator_out` must be valid.
 */
SenslabStatus senslab_estimator_new(const char *name,
                                    double clip_lo,
                                    double clip_hi,
                                    SenslabEstimator **estimator_out);

/*
 Frees an estimator. Null is ignored.

 # Safety
 `estimator` must come from [`senslab_estimator_new`] and not be freed twice.
 */
void senslab_estimator_free(SenslabEstimator *estimator);

/*
 Evaluates an estimator. Writes up to `capacity` values to `values_out`
 and the output dimension to `len_out`; fails with `BufferTooSmall` if
 `capacity` is short.

 # Safety
 Handles must be live; `values_out` must hold `capacity` doubles.
 */
SenslabStatus senslab_estimator_evaluate(const SenslabEstimator *estimator,
                                         const SenslabDataset *dataset,
                                         double *values_out,
                                         size_t capacity,
                                         size_t *len_out);

/*
 Exact worst-case median displacement for a scalar dataset of odd size.

 # Safety
 `dataset` must be live; `value_out` must be valid.
 */
SenslabStatus senslab_median_worst_case(const SenslabDataset *dataset, size_t k, double *value_out);

/*
 Exact expected sensitivity on `Bern(p)^n` data under `k` corruptions.

 # Safety
 `estimator` must be live; `value_out` must be valid.
 */
SenslabStatus senslab_bernoulli_expected_sensitivity(const SenslabEstimator *estimator,
                                                     size_t n,
                                                     double p,
                                                     size_t k,
                                                     double *value_out);

/*
 Monte Carlo expected sensitivity of a registry estimator on `N(0, I_d)`
 data. `delta` is used only by `local-shift`; pass NaN otherwise.

 # Safety
 String arguments must be nul-terminated; `report_out` must be valid.
 */
SenslabStatus senslab_estimate_es(const char *estimator,
                                  const char *adversary,
                                  double delta,
                                  size_t n,
                                  size_t d,
                                  double eta,
                                  uint32_t q,
                                  uint64_t trials,
                                  uint64_t seed,
                                  SenslabReport **report_out);

/*
 Point estimate and confidence interval of a report.

 # Safety
 `report` must be live; out-pointers must be valid.
 */
SenslabStatus senslab_report_summary(const SenslabReport *report,
                                     double *es_out,
                                     double *ci_low_out,
                                     double *ci_high_out);

/*
 The report as `senslab/v1` JSON; free with [`senslab_string_free`].

 # Safety
 `report` must be live; `json_out` must be valid.
 */
SenslabStatus senslab_report_json(const SenslabReport *report, char **json_out);

/*
 Frees a report. Null is ignored.

 # Safety
 `report` must come from [`senslab_estimate_es`] and not be freed twice.
 */
void senslab_report_free(SenslabReport *report);

/*
 Runs the inequality checker grid. Writes the failure count and, if
 `json_out` is not null, the full JSON report.

 # Safety
 `failures_out` must be valid; `json_out` may be null.
 */
SenslabStatus senslab_verify(uint64_t trials_scale,
                             uint64_t seed,
                             size_t *failures_out,
                             char **json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SENSLAB_H */
