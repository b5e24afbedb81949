#ifndef MTOF_H
#define MTOF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MtofStatus {
  MTOF_STATUS_OK = 0,
  MTOF_STATUS_NULL_POINTER = 1,
  MTOF_STATUS_INVALID_ARGUMENT = 2,
  MTOF_STATUS_IO = 3,
  /**
   * Malformed checkpoint, image or manifest.
   */
  MTOF_STATUS_FORMAT = 4,
  /**
   * A panic inside the library.
   */
  MTOF_STATUS_INTERNAL = 5,
} MtofStatus;

/**
 * A loaded detector. Opaque to C.
 */
typedef struct MtofDetector MtofDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next `mtof_*` call on the same thread.
 */
const char *mtof_last_error(void);

/**
 * Loads a checkpoint written by `mtof train`. On success `*out` owns a
 * detector that must be released with [`mtof_detector_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MtofStatus mtof_detector_load(const char *path, struct MtofDetector **out);

/**
 * Releases a detector; NULL is ignored.
 *
 * # Safety
 * `detector` must come from [`mtof_detector_load`] and not be freed twice.
 */
void mtof_detector_free(struct MtofDetector *detector);

/**
 * Scores one pair. `rgb` holds `3 * width * height` values in `[0, 1]`,
 * planar (all red, then green, then blue), rows top to bottom; `tof` holds
 * `width * height` refined depth values in `[0, 1]`. The detector's stored
 * preprocessing (resize, center crop) is applied first. `is_display` may be
 * NULL.
 *
 * # Safety
 * All non-NULL pointers must be valid for the stated lengths.
 */
enum MtofStatus mtof_detector_predict(const struct MtofDetector *detector,
                                      const double *rgb,
                                      const double *tof,
                                      size_t width,
                                      size_t height,
                                      double *p_display,
                                      int32_t *is_display);

/**
 * Splits a 16-bit ToF word into depth (mm) and confidence.
 *
 * # Safety
 * `depth_mm` and `confidence` must be valid pointers.
 */
enum MtofStatus mtof_decode_tof_pixel(uint16_t word, uint16_t *depth_mm, double *confidence);

/**
 * Radially averaged log power spectrum of a `width × height` map. Writes
 * at most `out_len` values to `out` and the full profile length to
 * `*written`; pass `out = NULL, out_len = 0` to query the length.
 *
 * # Safety
 * `map` must hold `width * height` values and `out` (if non-NULL) `out_len`.
 */
enum MtofStatus mtof_power_spectrum_1d(const double *map,
                                       size_t width,
                                       size_t height,
                                       double *out,
                                       size_t out_len,
                                       size_t *written);

/**
 * Area under the ROC curve of display scores; `labels[i]` is 1 for display
 * and 0 for real. Ties count one half.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` must be valid.
 */
enum MtofStatus mtof_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTOF_H */
