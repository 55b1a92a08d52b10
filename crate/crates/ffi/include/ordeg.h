#ifndef ORDEG_H
#define ORDEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2 to 5 match the command-line exit codes.
 */
typedef enum {
  ORDEG_STATUS_OK = 0,
  ORDEG_STATUS_NULL_POINTER = 1,
  ORDEG_STATUS_INVALID_ARGUMENT = 2,
  ORDEG_STATUS_IO = 3,
  ORDEG_STATUS_NUMERIC = 4,
  ORDEG_STATUS_INVALID_CHECKPOINT = 5,
  ORDEG_STATUS_IMAGE_TOO_SMALL = 6,
  ORDEG_STATUS_PANIC = 7,
} OrdegStatus;

/**
 * A loaded checkpoint.
 */
typedef struct OrdegModel OrdegModel;

typedef struct {
  /**
   * Bins used for level interpolation; 0 means all bins.
   */
  uint32_t top_k;
  double conf_threshold;
  double tau_w;
} OrdegRegressionConfig;

/**
 * `level_norm` and `level_raw` are NaN when `present` is false.
 */
typedef struct {
  bool present;
  double conf;
  double level_norm;
  double level_raw;
} OrdegTypePrediction;

/**
 * Entries in the order Blur, Downsample, Noisy, JPEG.
 */
typedef struct {
  OrdegTypePrediction types[4];
} OrdegPrediction;

typedef struct {
  double eta_par;
  double eta_perp;
  double w;
} OrdegCfpgParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ordeg_version(void);

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *ordeg_last_error(void);

/**
 * Name of degradation type `index` (0 to 3), or NULL.
 */
const char *ordeg_type_name(uint32_t index);

/**
 * Loads a checkpoint file and stores a new handle in `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a writable
 * pointer.
 */
OrdegStatus ordeg_model_load(const char *path, OrdegModel **out);

/**
 * Releases a handle from [`ordeg_model_load`]. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void ordeg_model_free(OrdegModel *model);

/**
 * Embedding dimension of the model, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t ordeg_model_embedding_dim(const OrdegModel *model);

OrdegRegressionConfig ordeg_regression_default(void);

/**
 * Predicts degradations for an 8-bit interleaved RGB image. `stride` is
 * the byte distance between rows (at least `3 * width`). `config` may be
 * NULL for defaults.
 *
 * # Safety
 * `pixels` must point to `stride * height` readable bytes; `model` must be
 * a live handle; `out` must be writable.
 */
OrdegStatus ordeg_predict_rgb(const OrdegModel *model,
                              const uint8_t *pixels,
                              uint32_t width,
                              uint32_t height,
                              size_t stride,
                              const OrdegRegressionConfig *config,
                              OrdegPrediction *out);

OrdegCfpgParams ordeg_cfpg_default_params(void);

/**
 * Projection-guided combination of four noise estimates of length `len`,
 * written to `out`. `params` may be NULL for defaults. `out` may alias
 * any input.
 *
 * # Safety
 * All five arrays must hold `len` doubles.
 */
OrdegStatus ordeg_cfpg_rectify(const double *eps_txt_pos,
                               const double *eps_txt_neg,
                               const double *eps_sem,
                               const double *eps_deg,
                               size_t len,
                               const OrdegCfpgParams *params,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORDEG_H */
