#ifndef MISNET_H
#define MISNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MisnetStatus {
  MISNET_STATUS_OK = 0,
  MISNET_STATUS_NULL_POINTER = 1,
  MISNET_STATUS_INVALID_ARGUMENT = 2,
  MISNET_STATUS_DATA_ERROR = 3,
  // The penalty leaves the objective non-convex, or nothing was feasible.
  MISNET_STATUS_NONCONVEX = 4,
  MISNET_STATUS_DIVERGED = 5,
  MISNET_STATUS_PANIC = 6,
} MisnetStatus;

typedef enum MisnetImpute {
  // Conditional mean under the fitted covariance.
  MISNET_IMPUTE_GAUSSIAN = 0,
  // Training column means.
  MISNET_IMPUTE_MEAN = 1,
} MisnetImpute;

// Covariance estimate of a standardized dataset.
typedef struct MisnetCovariance MisnetCovariance;

// Feature matrix with missing entries plus a complete response.
typedef struct MisnetDataset MisnetDataset;

// Fitted model; predicts on raw rows.
typedef struct MisnetModel MisnetModel;

typedef struct MisnetParameterRange {
  double lambda_alpha_max;
  double alpha_max;
  double lambda_min_required;
} MisnetParameterRange;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a dataset from a row-major `n_rows x n_cols` feature matrix and an
// `n_rows` response.
//
// # Safety
// `values` and `y` must point to arrays of the stated sizes; `mask` is either
// null or points to `n_rows * n_cols` bytes; `out` must be writable.
enum MisnetStatus misnet_dataset_new(const double *values,
                                     const uint8_t *mask,
                                     const double *y,
                                     size_t n_rows,
                                     size_t n_cols,
                                     struct MisnetDataset **out);

// # Safety
// `ds` must be null or a handle from [`misnet_dataset_new`] not yet freed.
void misnet_dataset_free(struct MisnetDataset *ds);

// Standardizes the dataset and builds its eta-weighted covariance estimate.
//
// # Safety
// `ds` must be a live dataset handle and `out` writable.
enum MisnetStatus misnet_covariance_new(const struct MisnetDataset *ds,
                                        double eta,
                                        struct MisnetCovariance **out);

// Smallest eigenvalue of the estimated feature covariance.
//
// # Safety
// `cov` must be a live covariance handle and `out` writable.
enum MisnetStatus misnet_covariance_lambda_min(const struct MisnetCovariance *cov, double *out);

// # Safety
// `cov` must be a live covariance handle and `out` writable.
enum MisnetStatus misnet_covariance_parameter_range(const struct MisnetCovariance *cov,
                                                    struct MisnetParameterRange *out);

// # Safety
// `cov` must be null or a handle from [`misnet_covariance_new`] not yet freed.
void misnet_covariance_free(struct MisnetCovariance *cov);

// Fits at `(lambda, alpha, eta)`. A non-positive `tol` or zero `max_sweeps`
// selects the default.
//
// # Safety
// `ds` must be a live dataset handle and `out` writable.
enum MisnetStatus misnet_fit(const struct MisnetDataset *ds,
                             double lambda,
                             double alpha,
                             double eta,
                             double tol,
                             size_t max_sweeps,
                             struct MisnetModel **out);

// Number of features the model was fitted on.
//
// # Safety
// `model` must be a live model handle.
size_t misnet_model_n_features(const struct MisnetModel *model);

// Copies the raw-coordinate coefficients into `out[0..len]`; `len` must equal
// the number of features.
//
// # Safety
// `model` must be a live model handle and `out` must hold `len` doubles.
enum MisnetStatus misnet_model_coefficients(const struct MisnetModel *model,
                                            double *out,
                                            size_t len);

// # Safety
// `model` must be a live model handle and `out` writable.
enum MisnetStatus misnet_model_intercept(const struct MisnetModel *model, double *out);

// Writes 1 to `out` if coordinate descent met its tolerance, else 0.
//
// # Safety
// `model` must be a live model handle and `out` writable.
enum MisnetStatus misnet_model_converged(const struct MisnetModel *model, int32_t *out);

// Predicts `n_rows` raw rows, completing missing entries per `impute`.
// Missing entries follow the same mask/NaN convention as [`misnet_dataset_new`].
//
// # Safety
// `values` must hold `n_rows * n_cols` doubles, `mask` is null or as many
// bytes, and `out` must hold `n_rows` doubles.
enum MisnetStatus misnet_model_predict(const struct MisnetModel *model,
                                       const double *values,
                                       const uint8_t *mask,
                                       size_t n_rows,
                                       size_t n_cols,
                                       enum MisnetImpute impute,
                                       double *out);

// # Safety
// `model` must be null or a handle from [`misnet_fit`] not yet freed.
void misnet_model_free(struct MisnetModel *model);

// Description of the last failure on this thread, or null. The string stays
// valid until the next call into this library on the same thread.
const char *misnet_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MISNET_H */
