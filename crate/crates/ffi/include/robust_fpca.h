#ifndef ROBUST_FPCA_H
#define ROBUST_FPCA_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfpcaStatus {
  RFPCA_STATUS_OK = 0,
  RFPCA_STATUS_NULL_POINTER = 1,
  RFPCA_STATUS_INVALID_INPUT = 2,
  RFPCA_STATUS_INVALID_CONFIG = 3,
  RFPCA_STATUS_ESTIMATION_FAILED = 4,
  RFPCA_STATUS_IO = 5,
  RFPCA_STATUS_BUFFER_TOO_SMALL = 6,
  RFPCA_STATUS_PANIC = 7,
} RfpcaStatus;

typedef enum RfpcaVariant {
  RFPCA_VARIANT_ROBUST = 0,
  RFPCA_VARIANT_LEAST_SQUARES = 1,
} RfpcaVariant;

/**
 * Opaque fitted model.
 */
typedef struct RfpcaFit RfpcaFit;

/**
 * Opaque set of curves.
 */
typedef struct RfpcaSample RfpcaSample;

/**
 * Fit options. Non-positive bandwidths request cross-validation, a zero
 * component count applies the `tau` rule and a negative `delta` uses the
 * default relative ridge.
 */
typedef struct RfpcaOptions {
  enum RfpcaVariant variant;
  double h_mean;
  double h_cov;
  uint32_t grid_points;
  double tau;
  uint32_t n_components;
  double delta;
  uint64_t seed;
} RfpcaOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *rfpca_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rfpca_version(void);

struct RfpcaOptions rfpca_options_default(void);

/**
 * Builds a sample from `n` observations. `curve[i]` identifies the curve of
 * observation `i`; curves are ordered by first appearance. The domain is
 * the observed range unless `a < b` is given.
 *
 * # Safety
 * `curve`, `t` and `x` must point to `n` readable values and `out` to a
 * writable handle slot.
 */
enum RfpcaStatus rfpca_sample_from_arrays(const uint64_t *curve,
                                          const double *t,
                                          const double *x,
                                          size_t n,
                                          double a,
                                          double b,
                                          struct RfpcaSample **out);

/**
 * Reads a `curve_id,t,x` table.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable handle slot.
 */
enum RfpcaStatus rfpca_sample_from_csv(const char *path, struct RfpcaSample **out);

/**
 * Number of curves, 0 for a null handle.
 *
 * # Safety
 * `sample` must be null or a live handle.
 */
size_t rfpca_sample_len(const struct RfpcaSample *sample);

/**
 * # Safety
 * `sample` must be null or a handle not yet freed.
 */
void rfpca_sample_free(struct RfpcaSample *sample);

/**
 * Fits the model. `options` may be null for the defaults.
 *
 * # Safety
 * `sample` must be a live handle, `options` null or valid, `out` writable.
 */
enum RfpcaStatus rfpca_fit(const struct RfpcaSample *sample,
                           const struct RfpcaOptions *options,
                           struct RfpcaFit **out);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void rfpca_fit_free(struct RfpcaFit *fit);

/**
 * Grid size `M`, 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t rfpca_fit_grid_len(const struct RfpcaFit *fit);

/**
 * Retained components `K`, 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t rfpca_fit_n_components(const struct RfpcaFit *fit);

/**
 * Number of curves the fit was estimated on.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t rfpca_fit_n_curves(const struct RfpcaFit *fit);

/**
 * Bandwidths used for the mean and the covariance.
 *
 * # Safety
 * `fit` must be a live handle; `h_mean` and `h_cov` writable.
 */
enum RfpcaStatus rfpca_fit_bandwidths(const struct RfpcaFit *fit, double *h_mean, double *h_cov);

/**
 * Grid points, `M` values.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` writable values.
 */
enum RfpcaStatus rfpca_fit_grid(const struct RfpcaFit *fit, double *buf, size_t len);

/**
 * Estimated mean on the grid, `M` values.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` writable values.
 */
enum RfpcaStatus rfpca_fit_mean(const struct RfpcaFit *fit, double *buf, size_t len);

/**
 * Covariance surface on the grid, `M·M` values in row-major order.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` writable values.
 */
enum RfpcaStatus rfpca_fit_covariance(const struct RfpcaFit *fit, double *buf, size_t len);

/**
 * All `M` eigenvalues, descending.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` writable values.
 */
enum RfpcaStatus rfpca_fit_eigenvalues(const struct RfpcaFit *fit, double *buf, size_t len);

/**
 * Eigenfunction `k` (0-based) on the grid, `M` values.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` writable values.
 */
enum RfpcaStatus rfpca_fit_eigenfunction(const struct RfpcaFit *fit,
                                         size_t k,
                                         double *buf,
                                         size_t len);

/**
 * Training scores, `N·K` values in row-major order.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` writable values.
 */
enum RfpcaStatus rfpca_fit_scores(const struct RfpcaFit *fit, double *buf, size_t len);

/**
 * Scores of the curves in `sample`, `N·K` values in row-major order.
 *
 * # Safety
 * `fit` and `sample` must be live handles and `buf` hold `len` writable
 * values.
 */
enum RfpcaStatus rfpca_fit_predict(const struct RfpcaFit *fit,
                                   const struct RfpcaSample *sample,
                                   double *buf,
                                   size_t len);

/**
 * Writes mean, covariance, eigen, scores and fitted files into `dir`.
 *
 * # Safety
 * `fit` must be a live handle and `dir` a NUL-terminated string.
 */
enum RfpcaStatus rfpca_fit_write(const struct RfpcaFit *fit, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUST_FPCA_H */
