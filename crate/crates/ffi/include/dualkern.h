#ifndef DUALKERN_H
#define DUALKERN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DK_LOSS_SQUARE 0

#define DK_LOSS_LP 1

#define DK_LOSS_L1 2

#define DK_LOSS_HUBER 3

#define DK_LOSS_SVR 4

#define DK_LOSS_HINGE 5

#define DK_LOSS_SQUARED_HINGE 6

#define DK_LOSS_LOGISTIC 7

#define DK_MODE_EXACT 0

#define DK_MODE_INEXACT 1

#define DK_KERNEL_GAUSSIAN 0

#define DK_KERNEL_LAPLACIAN 1

#define DK_PRECISION_DOUBLE 0

#define DK_PRECISION_SINGLE 1

/**
 * Opaque trained model.
 */
typedef struct DkModel DkModel;

typedef int32_t DkStatus;

/**
 * Training settings. Initialize with [`dk_train_config_default`].
 */
typedef struct DkTrainConfig {
  /**
   * One of the `DK_LOSS_*` values.
   */
  int32_t loss;
  /**
   * Lp exponent, Huber threshold or SVR insensitivity; ignored otherwise.
   */
  double loss_param;
  double lambda;
  /**
   * `DK_MODE_*`.
   */
  int32_t mode;
  /**
   * `DK_KERNEL_*`.
   */
  int32_t kernel;
  /**
   * Bandwidth; a value `<= 0` selects the median heuristic.
   */
  double sigma;
  size_t rff_dim;
  /**
   * 0 picks the per-loss default.
   */
  size_t block_size;
  size_t iterations;
  uint64_t seed_partition;
  uint64_t seed_rff;
  /**
   * `DK_PRECISION_*`.
   */
  int32_t precision;
  /**
   * Non-zero enables z-score normalization.
   */
  int32_t zscore;
} DkTrainConfig;

#define DK_OK 0

#define DK_ERR_NULL 1

#define DK_ERR_PARAM 2

#define DK_ERR_DATA 3

#define DK_ERR_NUMERICAL 4

#define DK_ERR_MODEL_FORMAT 5

#define DK_ERR_IO 6

#define DK_ERR_UNSUPPORTED 7

#define DK_ERR_PANIC 8

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Fills `out` with the default settings.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `DkTrainConfig`.
 */
DkStatus dk_train_config_default(struct DkTrainConfig *out);

/**
 * Trains on a dense row-major `n x d` matrix `x` with targets `y` and stores
 * a new handle in `*out`.
 *
 * # Safety
 * `x` must hold `n * d` doubles, `y` must hold `n` doubles, `config` must
 * point to a valid `DkTrainConfig` and `out` to writable storage.
 */
DkStatus dk_train_dense(const double *x,
                        size_t n,
                        size_t d,
                        const double *y,
                        const struct DkTrainConfig *config,
                        struct DkModel **out);

/**
 * Loads a model file into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
DkStatus dk_model_load(const char *path, struct DkModel **out);

/**
 * Writes a model file.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
DkStatus dk_model_save(const struct DkModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void dk_model_free(struct DkModel *model);

/**
 * Feature dimension the model expects.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
DkStatus dk_model_dim(const struct DkModel *model, size_t *out);

/**
 * Raw decision or regression values for `n` rows into `out[0..n]`.
 *
 * # Safety
 * `x` must hold `n * d` doubles and `out` room for `n`.
 */
DkStatus dk_predict_raw(const struct DkModel *model,
                        const double *x,
                        size_t n,
                        size_t d,
                        double *out);

/**
 * Class labels (classification models only).
 *
 * # Safety
 * As for [`dk_predict_raw`].
 */
DkStatus dk_predict_label(const struct DkModel *model,
                          const double *x,
                          size_t n,
                          size_t d,
                          double *out);

/**
 * Positive-class probabilities (binary logistic models only).
 *
 * # Safety
 * As for [`dk_predict_raw`].
 */
DkStatus dk_predict_proba(const struct DkModel *model,
                          const double *x,
                          size_t n,
                          size_t d,
                          double *out);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * always NUL-terminated when `len > 0`). Returns the full message length in
 * bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or hold `len` writable bytes.
 */
size_t dk_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dk_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALKERN_H */
