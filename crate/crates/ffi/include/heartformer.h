#ifndef HEARTFORMER_H
#define HEARTFORMER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
enum HfStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_ARGUMENT = 2,
  HF_STATUS_IO = 3,
  HF_STATUS_FORMAT = 4,
  HF_STATUS_SHAPE = 5,
  HF_STATUS_NON_FINITE = 6,
  HF_STATUS_EMPTY_CLASS = 7,
  HF_STATUS_DEGENERATE = 8,
  HF_STATUS_BUFFER_TOO_SMALL = 9,
  HF_STATUS_PANIC = 10,
};
#ifndef __cplusplus
typedef int32_t HfStatus;
#endif // __cplusplus

/**
 * A labeled point cloud.
 */
typedef struct HfCloud HfCloud;

/**
 * A trained network ready for inference.
 */
typedef struct HfModel HfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *hf_last_error(void);

/**
 * Builds a cloud from `n` xyz triples (`3n` doubles, millimetres) and `n`
 * labels in `0..6`.
 *
 * # Safety
 * `xyz` and `labels` must point to `3n` and `n` readable elements.
 */
HfStatus hf_cloud_new(const double *xyz, const uint8_t *labels, size_t n, struct HfCloud **out);

/**
 * Reads an LPC file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
HfStatus hf_cloud_read_lpc(const char *path, struct HfCloud **out);

/**
 * Writes an LPC file (coordinates stored as 32-bit floats).
 *
 * # Safety
 * `cloud` must be a live handle; `path` a NUL-terminated string.
 */
HfStatus hf_cloud_write_lpc(const struct HfCloud *cloud, const char *path);

/**
 * Number of points; 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t hf_cloud_len(const struct HfCloud *cloud);

/**
 * Copies coordinates (`3·len` doubles) and labels (`len` bytes) into caller
 * buffers of `capacity` points. Either buffer may be null to skip it.
 *
 * # Safety
 * Non-null buffers must hold `3·capacity` doubles / `capacity` bytes.
 */
HfStatus hf_cloud_copy(const struct HfCloud *cloud, double *xyz, uint8_t *labels, size_t capacity);

/**
 * Releases a cloud; null is ignored.
 *
 * # Safety
 * `cloud` must be null or a handle not yet freed.
 */
void hf_cloud_free(struct HfCloud *cloud);

/**
 * Loads a network from a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
HfStatus hf_model_load(const char *path, struct HfModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void hf_model_free(struct HfModel *model);

/**
 * Completes a sparse cloud; `out` receives the fine-stage prediction.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
HfStatus hf_model_complete(const struct HfModel *model,
                           const struct HfCloud *sparse,
                           struct HfCloud **out);

/**
 * Semantic-aware Chamfer distance (mm) between two labeled clouds.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
HfStatus hf_sa_cd(const struct HfCloud *pred, const struct HfCloud *gt, double *out);

/**
 * Convex-hull volume (ml) of one labeled chamber.
 *
 * # Safety
 * `cloud` must be live; `out` must be writable.
 */
HfStatus hf_chamber_volume(const struct HfCloud *cloud, uint8_t chamber, double *out);

/**
 * Ejection fraction in percent.
 *
 * # Safety
 * `out` must be writable.
 */
HfStatus hf_ejection_fraction(double edv_ml, double esv_ml, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEARTFORMER_H */
