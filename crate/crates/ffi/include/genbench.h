#ifndef GENBENCH_H
#define GENBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GbStatus {
  GB_STATUS_OK = 0,
  GB_STATUS_NULL_POINTER = 1,
  GB_STATUS_INVALID_INPUT = 2,
  GB_STATUS_INSUFFICIENT_SAMPLES = 3,
  GB_STATUS_DIMENSION_MISMATCH = 4,
  GB_STATUS_NOT_PSD = 5,
  GB_STATUS_INVALID_BOUNDS = 6,
  GB_STATUS_IO = 7,
  GB_STATUS_PARSE = 8,
  GB_STATUS_PANIC = 9,
  GB_STATUS_OTHER = 10,
} GbStatus;

// Per-metric normalization bounds.
typedef struct GbBoundsRegistry GbBoundsRegistry;

// Mean and covariance of a feature set.
typedef struct GbGaussianStats GbGaussianStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call on the same thread.
const char *gb_last_error(void);

// Library version as a static NUL-terminated string.
const char *gb_version(void);

// Gaussian statistics of a row-major `rows x cols` feature matrix.
//
// # Safety
// `features` must point to `rows * cols` doubles; `out_stats` must be writable.
enum GbStatus gb_stats_from_features(const double *features,
                                     size_t rows,
                                     size_t cols,
                                     struct GbGaussianStats **out_stats);

// Statistics from a known mean (`dim`) and row-major covariance (`dim * dim`).
//
// # Safety
// `mean` and `cov` must point to `dim` and `dim * dim` doubles.
enum GbStatus gb_stats_from_moments(const double *mean,
                                    const double *cov,
                                    size_t dim,
                                    struct GbGaussianStats **out_stats);

// Feature dimension of a stats handle.
//
// # Safety
// `stats` must be null or a live handle.
enum GbStatus gb_stats_dim(const struct GbGaussianStats *stats, size_t *out_dim);

// # Safety
// `stats` must be null or a handle not yet freed.
void gb_stats_free(struct GbGaussianStats *stats);

// Fréchet distance between two Gaussians.
//
// # Safety
// `a` and `b` must be live handles; `out_distance` must be writable.
enum GbStatus gb_frechet_distance(const struct GbGaussianStats *a,
                                  const struct GbGaussianStats *b,
                                  double *out_distance);

// Inception Score over a row-major `rows x classes` probability matrix.
//
// # Safety
// `probs` must point to `rows * classes` doubles; outputs must be writable.
enum GbStatus gb_inception_score(const double *probs,
                                 size_t rows,
                                 size_t classes,
                                 size_t splits,
                                 double *out_mean,
                                 double *out_std);

// Bounds measured over the ImageNet benchmark.
//
// # Safety
// `out_bounds` must be writable.
enum GbStatus gb_bounds_imagenet(struct GbBoundsRegistry **out_bounds);

// Load a `bounds.json` file.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out_bounds` must be writable.
enum GbStatus gb_bounds_load(const char *path, struct GbBoundsRegistry **out_bounds);

// # Safety
// `bounds` must be null or a handle not yet freed.
void gb_bounds_free(struct GbBoundsRegistry *bounds);

// MMHM composite for one run. `epsilon <= 0` selects the default 0.001.
// `out_utilities`, if not null, receives the four utilities in
// FID, IS, CLIP, PICK order.
//
// # Safety
// `bounds` must be a live handle; `out_score` must be writable;
// `out_utilities` must be null or point to 4 writable doubles.
enum GbStatus gb_mmhm(const struct GbBoundsRegistry *bounds,
                      double fid,
                      double is_mean,
                      double clip,
                      double pick,
                      double epsilon,
                      double *out_score,
                      double *out_utilities);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENBENCH_H */
