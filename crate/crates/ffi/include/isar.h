#ifndef ISAR_H
#define ISAR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum IsarStatus {
  ISAR_STATUS_OK = 0,
  ISAR_STATUS_NULL_POINTER = 1,
  ISAR_STATUS_INVALID_ARGUMENT = 2,
  ISAR_STATUS_CONFIG = 3,
  ISAR_STATUS_DIVERGENCE = 4,
  ISAR_STATUS_IO = 5,
  ISAR_STATUS_FORMAT = 6,
  ISAR_STATUS_SHAPE_MISMATCH = 7,
  ISAR_STATUS_OUT_OF_DOMAIN = 8,
  ISAR_STATUS_BUFFER_TOO_SMALL = 9,
  ISAR_STATUS_PANIC = 10,
} IsarStatus;

/**
 * Experiment configuration (all `key = value` settings).
 */
typedef struct IsarConfig IsarConfig;

/**
 * Reconstructed or reference image.
 */
typedef struct IsarImage IsarImage;

/**
 * Range profiles over aperture angle.
 */
typedef struct IsarSinogram IsarSinogram;

/**
 * Image quality against ground truth.
 */
typedef struct IsarMetrics {
  double psnr_db;
  double mse;
  double ssim;
  size_t peak_count;
} IsarMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null if none.
 * Valid until the next failing call on the same thread.
 */
const char *isar_last_error(void);

/**
 * Static name of a status code.
 */
const char *isar_status_name(enum IsarStatus status);

/**
 * Default configuration. Free with `isar_config_free`.
 */
struct IsarConfig *isar_config_new(void);

/**
 * Load a `key = value` config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IsarStatus isar_config_load(const char *path, struct IsarConfig **out);

/**
 * Set one key, as in a config file line.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be NUL-terminated.
 */
enum IsarStatus isar_config_set(struct IsarConfig *cfg, const char *key, const char *value);

/**
 * Check that every derived setting is usable.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum IsarStatus isar_config_validate(const struct IsarConfig *cfg);

/**
 * # Safety
 * `cfg` must come from this library or be null; it is invalid afterwards.
 */
void isar_config_free(struct IsarConfig *cfg);

/**
 * Simulate the configured scene, including noise.
 *
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum IsarStatus isar_simulate(const struct IsarConfig *cfg, struct IsarSinogram **out);

/**
 * Build a sinogram from caller data: `n_angles` angles in degrees and
 * `n_angles * n_bins` row-major samples on bins spanning `[r_min, r_max]`.
 *
 * # Safety
 * `angles_deg` and `data` must point to that many readable doubles.
 */
enum IsarStatus isar_sinogram_from_data(const double *angles_deg,
                                        size_t n_angles,
                                        const double *data,
                                        double r_min,
                                        double r_max,
                                        size_t n_bins,
                                        struct IsarSinogram **out);

/**
 * Read a binary (`.isgm`) or CSV (`.csv`) sinogram.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` a valid pointer.
 */
enum IsarStatus isar_sinogram_load(const char *path, struct IsarSinogram **out);

/**
 * Write a sinogram; a `.csv` extension selects the text format.
 *
 * # Safety
 * `s` must come from this library and `path` be NUL-terminated.
 */
enum IsarStatus isar_sinogram_save(const struct IsarSinogram *s, const char *path);

/**
 * # Safety
 * `s` must come from this library; the out pointers must be valid.
 */
enum IsarStatus isar_sinogram_shape(const struct IsarSinogram *s, size_t *n_angles, size_t *n_bins);

/**
 * Copy the row-major samples into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `s` must come from this library and `buf` point to `len` writable doubles.
 */
enum IsarStatus isar_sinogram_copy_data(const struct IsarSinogram *s, double *buf, size_t len);

/**
 * # Safety
 * `s` must come from this library or be null; it is invalid afterwards.
 */
void isar_sinogram_free(struct IsarSinogram *s);

/**
 * Backprojection image on the configured grid.
 *
 * # Safety
 * `cfg` and `s` must come from this library; `out` must be valid.
 */
enum IsarStatus isar_backproject(const struct IsarConfig *cfg,
                                 const struct IsarSinogram *s,
                                 struct IsarImage **out);

/**
 * Neural-field reconstruction with the configured training settings.
 * Runs to completion on the calling thread.
 *
 * # Safety
 * `cfg` and `s` must come from this library; `out` must be valid.
 */
enum IsarStatus isar_reconstruct(const struct IsarConfig *cfg,
                                 const struct IsarSinogram *s,
                                 struct IsarImage **out);

/**
 * Ground-truth image of the configured scene.
 *
 * # Safety
 * `cfg` must come from this library and `out` be valid.
 */
enum IsarStatus isar_ground_truth(const struct IsarConfig *cfg, struct IsarImage **out);

/**
 * Score `img` against the configured scene's ground truth.
 *
 * # Safety
 * `cfg` and `img` must come from this library; `out` must be valid.
 */
enum IsarStatus isar_score(const struct IsarConfig *cfg,
                           const struct IsarImage *img,
                           struct IsarMetrics *out);

/**
 * # Safety
 * `img` must come from this library; the out pointers must be valid.
 */
enum IsarStatus isar_image_shape(const struct IsarImage *img, size_t *width, size_t *height);

/**
 * Copy pixels row-major, row 0 at the most negative y, into `buf`.
 *
 * # Safety
 * `img` must come from this library and `buf` point to `len` writable doubles.
 */
enum IsarStatus isar_image_copy_pixels(const struct IsarImage *img, double *buf, size_t len);

/**
 * Write the raw float image format read by `isar metrics`.
 *
 * # Safety
 * `img` must come from this library and `path` be NUL-terminated.
 */
enum IsarStatus isar_image_save(const struct IsarImage *img, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum IsarStatus isar_image_load(const char *path, struct IsarImage **out);

/**
 * # Safety
 * `img` must come from this library or be null; it is invalid afterwards.
 */
void isar_image_free(struct IsarImage *img);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAR_H */
