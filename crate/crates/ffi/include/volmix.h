#ifndef VOLMIX_H
#define VOLMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum VolmixStatus {
  VOLMIX_STATUS_OK = 0,
  // A required pointer was null.
  VOLMIX_STATUS_NULL_POINTER = 1,
  // Invalid input data or arguments; the CLI reports these with exit code 2.
  VOLMIX_STATUS_INVALID_INPUT = 2,
  // Numerical failure such as non-convergence; exit code 3 in the CLI.
  VOLMIX_STATUS_NUMERICAL = 3,
  // An output buffer is shorter than required.
  VOLMIX_STATUS_BUFFER_TOO_SMALL = 4,
  // A Rust panic was caught at the boundary.
  VOLMIX_STATUS_PANIC = 5,
} VolmixStatus;

// A fitted GARCH-MIDAS model.
typedef struct VolmixMidasFit VolmixMidasFit;

// A fitted principal-component model.
typedef struct VolmixPca VolmixPca;

// A trained transformer regressor with its feature and target scaling.
typedef struct VolmixTransformer VolmixTransformer;

// Loss measures for one forecast series.
typedef struct VolmixLosses {
  size_t n;
  double mse;
  double hmse;
  double mae;
  double mape;
  double qlike;
  double r2log;
} VolmixLosses;

// Scalar parameters and fit statistics of a GARCH-MIDAS fit.
typedef struct VolmixMidasSummary {
  double mu;
  double alpha;
  double beta;
  double m;
  double log_likelihood;
  size_t n_obs;
  size_t lags;
  size_t covariates;
  bool converged;
} VolmixMidasSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *volmix_version(void);

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len - 1` bytes) and returns the full message length.
// Returns 0 when the last call succeeded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t volmix_last_error(char *buf, size_t len);

// Normalised beta lag weights for `lags` lags into `out[0..lags]`.
//
// # Safety
// `out` must point to `out_len` writable doubles.
enum VolmixStatus volmix_beta_weights(size_t lags,
                                      double omega1,
                                      double omega2,
                                      double *out,
                                      size_t out_len);

// Realized variance of one day's bar prices (in-session squared percent log returns).
//
// # Safety
// `prices` must point to `n` readable doubles; `out` must be writable.
enum VolmixStatus volmix_realized_variance(const double *prices, size_t n, double *out);

// Scale parameter `mean(R^2) / mean(RV)`.
//
// # Safety
// `returns` and `rv` must point to `n` readable doubles; `out` must be writable.
enum VolmixStatus volmix_scale_parameter(const double *returns,
                                         const double *rv,
                                         size_t n,
                                         double *out);

// All loss measures of `forecast` against `realized`.
//
// # Safety
// `forecast` and `realized` must point to `n` readable doubles; `out` must be writable.
enum VolmixStatus volmix_evaluate(const double *forecast,
                                  const double *realized,
                                  size_t n,
                                  struct VolmixLosses *out);

// Fits GARCH-MIDAS with `n_covariates` exogenous monthly covariates and log link.
//
// `month_of_day[i]` is the 0-based month of day `i`; `covariates` is
// `n_covariates x n_months`, one row per covariate.
//
// # Safety
// Input pointers must cover the stated lengths; `out` must be writable.
enum VolmixStatus volmix_midas_fit(const double *returns,
                                   const size_t *month_of_day,
                                   size_t n_days,
                                   const double *covariates,
                                   size_t n_covariates,
                                   size_t n_months,
                                   size_t lags,
                                   uint64_t seed,
                                   struct VolmixMidasFit **out);

// Loads a fit saved by the CLI or by [`volmix_midas_save`].
//
// # Safety
// `file` must be a NUL-terminated path; `out` must be writable.
enum VolmixStatus volmix_midas_load(const char *file, struct VolmixMidasFit **out);

// # Safety
// `fit` must be a live handle; `file` a NUL-terminated path.
enum VolmixStatus volmix_midas_save(const struct VolmixMidasFit *fit, const char *file);

// # Safety
// `fit` must be a live handle; `out` must be writable.
enum VolmixStatus volmix_midas_summary(const struct VolmixMidasFit *fit,
                                       struct VolmixMidasSummary *out);

// Slope and beta-weight shapes of covariate `j` (0-based).
//
// # Safety
// `fit` must be a live handle; the three outputs must be writable.
enum VolmixStatus volmix_midas_covariate(const struct VolmixMidasFit *fit,
                                         size_t j,
                                         double *theta,
                                         double *omega1,
                                         double *omega2);

// Conditional variance `h` of every modeled day of the given data.
//
// Writes `*written` values to `out_h`, the first belonging to day `*first_day`.
//
// # Safety
// Input pointers must cover the stated lengths; outputs must be writable.
enum VolmixStatus volmix_midas_filter(const struct VolmixMidasFit *fit,
                                      const double *returns,
                                      const size_t *month_of_day,
                                      size_t n_days,
                                      const double *covariates,
                                      size_t n_covariates,
                                      size_t n_months,
                                      double *out_h,
                                      size_t out_len,
                                      size_t *written,
                                      size_t *first_day);

// # Safety
// `fit` must be null or a handle not yet freed.
void volmix_midas_free(struct VolmixMidasFit *fit);

// Fits PCA on a `rows x cols` matrix, keeping `retain` components.
//
// # Safety
// `data` must point to `rows * cols` doubles; `out` must be writable.
enum VolmixStatus volmix_pca_fit(const double *data,
                                 size_t rows,
                                 size_t cols,
                                 size_t retain,
                                 struct VolmixPca **out);

// Loads a `pca_<group>.json` written by the CLI.
//
// # Safety
// `file` must be a NUL-terminated path; `out` must be writable.
enum VolmixStatus volmix_pca_load(const char *file, struct VolmixPca **out);

// Number of retained components.
//
// # Safety
// `pca` must be a live handle or null (returns 0).
size_t volmix_pca_components(const struct VolmixPca *pca);

// Variance share of each retained component.
//
// # Safety
// `pca` must be a live handle; `out` must point to `out_len` doubles.
enum VolmixStatus volmix_pca_contributions(const struct VolmixPca *pca,
                                           double *out,
                                           size_t out_len);

// Component scores of a `rows x cols` matrix, written row-major as `rows x components`.
//
// # Safety
// `data` must point to `rows * cols` doubles; `out` to `out_len` doubles.
enum VolmixStatus volmix_pca_transform(const struct VolmixPca *pca,
                                       const double *data,
                                       size_t rows,
                                       size_t cols,
                                       double *out,
                                       size_t out_len);

// # Safety
// `pca` must be null or a handle not yet freed.
void volmix_pca_free(struct VolmixPca *pca);

// Loads a `weights.json` written by the CLI.
//
// # Safety
// `file` must be a NUL-terminated path; `out` must be writable.
enum VolmixStatus volmix_transformer_load(const char *file, struct VolmixTransformer **out);

// Number of input features per day.
//
// # Safety
// `model` must be a live handle or null (returns 0).
size_t volmix_transformer_features(const struct VolmixTransformer *model);

// Number of days per input window the model was trained with.
//
// # Safety
// `model` must be a live handle or null (returns 0).
size_t volmix_transformer_window(const struct VolmixTransformer *model);

// Next-day forecast from one raw `rows x cols` window, oldest day first.
//
// # Safety
// `window` must point to `rows * cols` doubles; `out` must be writable.
enum VolmixStatus volmix_transformer_predict(const struct VolmixTransformer *model,
                                             const double *window,
                                             size_t rows,
                                             size_t cols,
                                             double *out);

// # Safety
// `model` must be null or a handle not yet freed.
void volmix_transformer_free(struct VolmixTransformer *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLMIX_H */
