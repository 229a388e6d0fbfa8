#ifndef VIE_H
#define VIE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Zero is success.
 */
typedef enum VieStatus {
  VIE_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  VIE_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  VIE_STATUS_INVALID_UTF8 = 2,
  /**
   * A precondition on sizes, ranges or names was broken.
   */
  VIE_STATUS_CONTRACT = 3,
  /**
   * A value fell outside an operation's domain.
   */
  VIE_STATUS_DOMAIN = 4,
  /**
   * Training produced a non-finite quantity.
   */
  VIE_STATUS_TRAINING = 5,
  /**
   * Feature width or class count disagrees between model and data.
   */
  VIE_STATUS_MISMATCH = 6,
  /**
   * Malformed text input (CSV, checkpoint, config).
   */
  VIE_STATUS_PARSE = 7,
  VIE_STATUS_IO = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  VIE_STATUS_PANIC = 9,
} VieStatus;

/**
 * Labeled rows: features, labels and the optional oracle risk.
 */
typedef struct VieDataset VieDataset;

/**
 * A trained model.
 */
typedef struct VieModel VieModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vie_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into the library on this
 * thread.
 */
const char *vie_last_error(void);

/**
 * Generates a binary dataset. `generator` is `"longtailed"` or
 * `"semisynthetic"`; other settings are the library defaults.
 *
 * # Safety
 * `generator` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VieStatus vie_dataset_generate(const char *generator,
                                    size_t n,
                                    double rate,
                                    uint64_t seed,
                                    struct VieDataset **out);

/**
 * Builds a dataset from a row-major `rows × cols` feature matrix and
 * `rows` class labels.
 *
 * # Safety
 * `features` must hold `rows * cols` values, `labels` `rows` values.
 */
enum VieStatus vie_dataset_from_arrays(const double *features,
                                       size_t rows,
                                       size_t cols,
                                       const uint32_t *labels,
                                       struct VieDataset **out);

/**
 * Reads a dataset CSV in the format written by `vie generate`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VieStatus vie_dataset_read_csv(const char *path, struct VieDataset **out);

/**
 * # Safety
 * `data` must be a live handle and `path` a NUL-terminated string.
 */
enum VieStatus vie_dataset_write_csv(const struct VieDataset *data, const char *path);

/**
 * Stratified 6:2:2 split into three new handles.
 *
 * # Safety
 * `data` must be a live handle and the three outputs valid pointers.
 */
enum VieStatus vie_dataset_split(const struct VieDataset *data,
                                 uint64_t seed,
                                 struct VieDataset **train,
                                 struct VieDataset **valid,
                                 struct VieDataset **test);

/**
 * Row count; 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t vie_dataset_rows(const struct VieDataset *data);

/**
 * Feature count; 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t vie_dataset_cols(const struct VieDataset *data);

/**
 * Fraction of rows with label 1.
 *
 * # Safety
 * `data` must be a live handle and `out` a valid pointer.
 */
enum VieStatus vie_dataset_event_rate(const struct VieDataset *data, double *out);

/**
 * Copies the features (row-major) into `out`, which must hold
 * `rows * cols` values.
 *
 * # Safety
 * `data` must be a live handle and `out` hold `len` values.
 */
enum VieStatus vie_dataset_features(const struct VieDataset *data, double *out, size_t len);

/**
 * Copies the labels into `out`, which must hold `rows` values.
 *
 * # Safety
 * `data` must be a live handle and `out` hold `len` values.
 */
enum VieStatus vie_dataset_labels(const struct VieDataset *data, uint32_t *out, size_t len);

/**
 * Releases a dataset handle; null is ignored.
 *
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void vie_dataset_free(struct VieDataset *data);

/**
 * Trains a variant (`"vae"`, `"vae-gpd"`, `"iaf-gpd"`, `"fenchel-gpd"` or
 * `"vie"`). `config` is null or `key = value` lines with the training keys
 * of `vie train`, e.g. `"epochs = 5\nseed = 3"`.
 *
 * # Safety
 * Handles must be live, strings NUL-terminated and `out` a valid pointer.
 */
enum VieStatus vie_model_train(const struct VieDataset *train_data,
                               const struct VieDataset *valid_data,
                               const char *variant,
                               const char *config,
                               struct VieModel **out);

/**
 * Loads a checkpoint written by [`vie_model_save`] or `vie train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VieStatus vie_model_load(const char *path, struct VieModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum VieStatus vie_model_save(const struct VieModel *model, const char *path);

/**
 * Feature count the model expects; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vie_model_input_dim(const struct VieModel *model);

/**
 * Number of classes; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vie_model_classes(const struct VieModel *model);

/**
 * Class probabilities for `rows` raw feature rows, written row-major into
 * `out` (`rows * classes` values), averaged over `draws` posterior draws.
 * Deterministic for a given `seed`.
 *
 * # Safety
 * `features` must hold `rows * cols` values and `out` hold `len` values.
 */
enum VieStatus vie_model_predict_proba(const struct VieModel *model,
                                       const double *features,
                                       size_t rows,
                                       size_t cols,
                                       uint64_t seed,
                                       size_t draws,
                                       double *out,
                                       size_t len);

/**
 * Releases a model handle; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void vie_model_free(struct VieModel *model);

/**
 * Area under the ROC curve for binary labels, ties counting one half.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values and `out` be valid.
 */
enum VieStatus vie_roc_auc(const double *scores, const uint32_t *labels, size_t n, double *out);

/**
 * Average precision with tied scores entering together.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values and `out` be valid.
 */
enum VieStatus vie_auprc(const double *scores, const uint32_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIE_H */
