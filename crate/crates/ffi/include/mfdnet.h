#ifndef MFDNET_H
#define MFDNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MFD_OK 0

/**
 * A required pointer argument was null.
 */
#define MFD_ERR_NULL 1

#define MFD_ERR_INVALID_ARG 2

#define MFD_ERR_IO 3

/**
 * Malformed MFDW file.
 */
#define MFD_ERR_FORMAT 4

#define MFD_ERR_SHAPE 5

/**
 * Weights missing or not matching the model.
 */
#define MFD_ERR_WEIGHTS 6

/**
 * A verification check ran but did not meet its tolerance.
 */
#define MFD_ERR_VERIFY 7

#define MFD_ERR_PANIC 99

#define MFD_FORM_TRAIN 0

#define MFD_FORM_DEPLOY 1

/**
 * Opaque model handle.
 */
typedef struct MfdModel MfdModel;

typedef struct MfdCost {
  uint64_t macs;
  uint64_t params;
  /**
   * Bytes.
   */
  uint64_t mem_read;
  /**
   * Bytes.
   */
  uint64_t mem_write;
} MfdCost;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mfd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mfd_version(void);

/**
 * Loads `path` (MFDW) for model `name` ("baseline", "mfdnet-s", "mfdnet",
 * "mfdnet-l"). Train or deploy form is detected from the tensors.
 *
 * # Safety
 * `name` and `path` must be NUL-terminated strings; `out` must be writable.
 */
int32_t mfd_model_load(const char *name, const char *path, struct MfdModel **out);

/**
 * Builds model `name` with seeded KaimingUniform weights scaled by `gain`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
int32_t mfd_model_init_random(const char *name,
                              int32_t form,
                              uint64_t seed,
                              float gain,
                              struct MfdModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void mfd_model_free(struct MfdModel *m);

/**
 * `MFD_FORM_TRAIN` or `MFD_FORM_DEPLOY`, or -1 for a null handle.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
int32_t mfd_model_form(const struct MfdModel *m);

/**
 * Height and width of inputs must be multiples of this; 0 for a null handle.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
size_t mfd_model_required_multiple(const struct MfdModel *m);

/**
 * Folds RepConv branches in place. A deploy-form model is left unchanged.
 *
 * # Safety
 * `m` must be a live handle.
 */
int32_t mfd_model_fold(struct MfdModel *m);

/**
 * Writes the model's weights to `path` as MFDW.
 *
 * # Safety
 * `m` must be a live handle; `path` a NUL-terminated string.
 */
int32_t mfd_model_save(const struct MfdModel *m, const char *path);

/**
 * Runs the model on an `n x 3 x h x w` NCHW f32 buffer. The output has the
 * same shape; `output_len` must equal `n * 3 * h * w`.
 *
 * # Safety
 * `input` must hold `n * 3 * h * w` floats and `output` room for `output_len`.
 */
int32_t mfd_model_forward(const struct MfdModel *m,
                          const float *input,
                          size_t n,
                          size_t h,
                          size_t w,
                          float *output,
                          size_t output_len);

/**
 * Cost of one `1 x 3 x height x width` forward pass. `calibrated` selects
 * the calibrated traffic convention, otherwise every layer is counted.
 *
 * # Safety
 * `m` must be a live handle; `out` writable.
 */
int32_t mfd_model_cost(const struct MfdModel *m,
                       size_t width,
                       size_t height,
                       bool calibrated,
                       struct MfdCost *out);

/**
 * Checks RepConv folding on `trials` seeded random branches. Returns
 * `MFD_OK` if the largest difference is within `tol`, `MFD_ERR_VERIFY`
 * otherwise. The difference is written to `max_abs_diff` if non-null.
 *
 * # Safety
 * `max_abs_diff` must be writable or null.
 */
int32_t mfd_verify_fold(uint64_t seed, size_t trials, float tol, float *max_abs_diff);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MFDNET_H */
