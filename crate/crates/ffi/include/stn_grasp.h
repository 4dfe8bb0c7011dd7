#ifndef STN_GRASP_H
#define STN_GRASP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The numeric values of the error kinds match the exit codes
 * of the command-line tool.
 */
typedef enum StnGraspStatus {
  STN_GRASP_STATUS_OK = 0,
  /**
   * Null pointer, bad length or otherwise unusable argument.
   */
  STN_GRASP_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Unreadable or malformed input data.
   */
  STN_GRASP_STATUS_INPUT_ERROR = 2,
  /**
   * Non-finite values during computation.
   */
  STN_GRASP_STATUS_NUMERIC_ERROR = 3,
  /**
   * Checkpoint does not match the expected format or configuration.
   */
  STN_GRASP_STATUS_MISMATCH = 4,
  /**
   * Unexpected internal failure.
   */
  STN_GRASP_STATUS_INTERNAL_ERROR = 5,
} StnGraspStatus;

/**
 * Opaque detector handle.
 */
typedef struct StnGraspModel StnGraspModel;

/**
 * A grasp rectangle in pixels of the 400×400 preprocessed crop. `theta_deg`
 * lies in [-90, 90); `h` is the plate length and `w` the opening.
 */
typedef struct StnGraspRect {
  double x;
  double y;
  double theta_deg;
  double w;
  double h;
} StnGraspRect;

/**
 * A detection: the winning rectangle and its classifier score.
 */
typedef struct StnGraspDetection {
  struct StnGraspRect rect;
  double score;
} StnGraspDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *stn_grasp_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *stn_grasp_last_error(void);

/**
 * Creates a model with the default architecture and freshly initialized
 * parameters. Output heads start at zero, so every candidate initially
 * decodes to the centred canonical rectangle.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum StnGraspStatus stn_grasp_model_new(uint64_t seed, struct StnGraspModel **out);

/**
 * Loads a checkpoint written by the command-line tool.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum StnGraspStatus stn_grasp_model_load(const char *path, struct StnGraspModel **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle from this library not yet freed.
 */
void stn_grasp_model_free(struct StnGraspModel *model);

/**
 * Side length of the square input the model expects, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uintptr_t stn_grasp_model_image_size(const struct StnGraspModel *model);

/**
 * Number of input channels (R, G, B, depth, nx, ny, nz).
 */
uintptr_t stn_grasp_num_channels(void);

/**
 * Detects on a preprocessed image: `len` floats in channel-major order
 * `[channel][row][column]` with `height == width == image size`.
 *
 * # Safety
 * `model` must be a live handle, `data` must point to `len` readable
 * floats and `out` must be valid for writes.
 */
enum StnGraspStatus stn_grasp_detect(const struct StnGraspModel *model,
                                     const float *data,
                                     uintptr_t len,
                                     uintptr_t height,
                                     uintptr_t width,
                                     struct StnGraspDetection *out);

/**
 * Preprocesses a raw RGB-D frame (centre 400×400 crop, depth hole filling,
 * normals) and detects on it. `rgb` holds `3·width·height` interleaved
 * bytes, `depth_mm` holds `width·height` depths where NaN marks missing
 * values. Returned coordinates are in the crop.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be valid for writes.
 */
enum StnGraspStatus stn_grasp_detect_rgbd(const struct StnGraspModel *model,
                                          const uint8_t *rgb,
                                          const float *depth_mm,
                                          uintptr_t width,
                                          uintptr_t height,
                                          struct StnGraspDetection *out);

/**
 * Jaccard index (intersection over union) of two rectangles.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum StnGraspStatus stn_grasp_jaccard(struct StnGraspRect a, struct StnGraspRect b, double *out);

/**
 * Success criterion: orientation difference below 30° and Jaccard index
 * above 0.25 against at least one of `count` ground truths.
 *
 * # Safety
 * `truths` must point to `count` rectangles; `out` must be valid for writes.
 */
enum StnGraspStatus stn_grasp_is_success(struct StnGraspRect pred,
                                         const struct StnGraspRect *truths,
                                         uintptr_t count,
                                         bool *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STN_GRASP_H */
