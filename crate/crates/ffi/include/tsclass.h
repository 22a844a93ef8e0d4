#ifndef TSCLASS_H
#define TSCLASS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsCriterion {
  TS_CRITERION_GINI = 0,
  TS_CRITERION_ENTROPY = 1,
} TsCriterion;

typedef enum TsKernel {
  TS_KERNEL_LINEAR = 0,
  TS_KERNEL_RBF = 1,
} TsKernel;

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_CONFIG = 2,
  TS_STATUS_INVALID_DATA = 3,
  TS_STATUS_TRAINING_FAILED = 4,
  TS_STATUS_PANIC = 5,
} TsStatus;

typedef enum TsTransform {
  TS_TRANSFORM_STD = 0,
  TS_TRANSFORM_COV = 1,
} TsTransform;

/*
 Labelled feature matrix.
 */
typedef struct TsFeatures TsFeatures;

/*
 Fitted logistic regression, decision tree or SVM.
 */
typedef struct TsModel TsModel;

/*
 Fitted PCA projection.
 */
typedef struct TsPca TsPca;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call into this library on the same thread.
 */
const char *ts_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *ts_version(void);

/*
 Number of features the transform yields for `n_channels` channels.
 */
size_t ts_transform_len(enum TsTransform kind, size_t n_channels);

/*
 Transform one window of `n_samples` × `n_channels` samples (row-major)
 into `out`, which must hold `ts_transform_len(kind, n_channels)` values.

 # Safety
 `samples` must point to `n_samples * n_channels` values and `out` to
 `out_len` writable values.
 */
enum TsStatus ts_transform_window(enum TsTransform kind,
                                  const double *samples,
                                  size_t n_samples,
                                  size_t n_channels,
                                  double *out,
                                  size_t out_len);

/*
 Copy a labelled matrix into a new handle.

 # Safety
 `values` must point to `n_rows * n_cols` values and `labels` to `n_rows`.
 */
enum TsStatus ts_features_new(const double *values,
                              const uint8_t *labels,
                              size_t n_rows,
                              size_t n_cols,
                              struct TsFeatures **out);

/*
 Load a feature CSV (trailing `label` column).

 # Safety
 `path` must be a NUL-terminated string.
 */
enum TsStatus ts_features_read_csv(const char *path, struct TsFeatures **out);

/*
 # Safety
 `f` must be a live handle; `rows` and `cols` writable.
 */
enum TsStatus ts_features_shape(const struct TsFeatures *f, size_t *rows, size_t *cols);

/*
 Copy the values (row-major) into `out`, which must hold rows × cols.

 # Safety
 `f` must be a live handle and `out` must hold `out_len` values.
 */
enum TsStatus ts_features_values(const struct TsFeatures *f, double *out, size_t out_len);

/*
 # Safety
 `f` must be null or a handle from this library, freed at most once.
 */
void ts_features_free(struct TsFeatures *f);

/*
 Fit `d` principal components.

 # Safety
 `f` must be a live handle and `out` writable.
 */
enum TsStatus ts_pca_fit(const struct TsFeatures *f, size_t d, struct TsPca **out);

/*
 Project a feature matrix onto the fitted components.

 # Safety
 Both handles must be live and `out` writable.
 */
enum TsStatus ts_pca_project(const struct TsPca *p,
                             const struct TsFeatures *f,
                             struct TsFeatures **out);

/*
 Explained-variance ratio of the `d` kept components into `out`.

 # Safety
 `p` must be a live handle and `out` must hold `out_len` values.
 */
enum TsStatus ts_pca_explained_ratio(const struct TsPca *p, double *out, size_t out_len);

/*
 # Safety
 `p` must be null or a handle from this library, freed at most once.
 */
void ts_pca_free(struct TsPca *p);

/*
 L2-penalised logistic regression with penalty `lambda`.

 # Safety
 `f` must be a live handle and `out` writable.
 */
enum TsStatus ts_train_logreg(const struct TsFeatures *f, double lambda, struct TsModel **out);

/*
 CART tree. `max_depth` 0 means unlimited.

 # Safety
 `f` must be a live handle and `out` writable.
 */
enum TsStatus ts_train_dtree(const struct TsFeatures *f,
                             enum TsCriterion criterion,
                             size_t max_depth,
                             size_t min_samples_split,
                             size_t min_samples_leaf,
                             double ccp_alpha,
                             struct TsModel **out);

/*
 Soft-margin SVM. A non-positive `gamma` selects the data-scaled default.

 # Safety
 `f` must be a live handle and `out` writable.
 */
enum TsStatus ts_train_svm(const struct TsFeatures *f,
                           enum TsKernel kernel,
                           double c,
                           double gamma,
                           struct TsModel **out);

/*
 Predicted labels of `n_rows` rows into `out_labels`.

 # Safety
 `m` must be a live handle, `values` must hold `n_rows * n_cols` values
 and `out_labels` `n_rows` bytes.
 */
enum TsStatus ts_model_predict(const struct TsModel *m,
                               const double *values,
                               size_t n_rows,
                               size_t n_cols,
                               uint8_t *out_labels);

/*
 Support-vector count of an SVM; 0 for other models.

 # Safety
 `m` must be a live handle.
 */
size_t ts_model_n_support(const struct TsModel *m);

/*
 Serialise a model as JSON. Release the string with [`ts_string_free`].

 # Safety
 `m` must be a live handle and `out` writable.
 */
enum TsStatus ts_model_to_json(const struct TsModel *m, char **out);

/*
 Rebuild a model from [`ts_model_to_json`] output.

 # Safety
 `json` must be a NUL-terminated string and `out` writable.
 */
enum TsStatus ts_model_from_json(const char *json, struct TsModel **out);

/*
 # Safety
 `m` must be null or a handle from this library, freed at most once.
 */
void ts_model_free(struct TsModel *m);

/*
 # Safety
 `s` must be null or a string returned by this library, freed at most once.
 */
void ts_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSCLASS_H */
