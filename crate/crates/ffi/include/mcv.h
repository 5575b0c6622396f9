/* Generated by cbindgen from src/lib.rs; do not edit. */

#ifndef MCV_H
#define MCV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MCV_PERMUTATION_RASTER 0

#define MCV_PERMUTATION_RANDOM 1

#define MCV_METRIC_EUCLIDEAN 0

#define MCV_METRIC_PER_BAND_ABS 1

#define MCV_EVAL_DIRECT 0

#define MCV_EVAL_PYRAMID 1

#define MCV_MERGE_LABEL_CENTER 0

#define MCV_MERGE_LABEL_FRESH 1

// Result of a fallible call.
typedef enum McvStatus {
  MCV_STATUS_OK = 0,
  MCV_STATUS_NULL_ARGUMENT = 1,
  MCV_STATUS_DOMAIN = 2,
  MCV_STATUS_PARSE = 3,
  MCV_STATUS_LABEL_OVERFLOW = 4,
  MCV_STATUS_CAPACITY = 5,
  MCV_STATUS_CONFIG = 6,
  MCV_STATUS_IO = 7,
  MCV_STATUS_BUFFER_TOO_SMALL = 8,
  MCV_STATUS_PANIC = 9,
} McvStatus;

// Segmentation settings handle.
typedef struct McvConfig McvConfig;

// Image handle.
typedef struct McvImage McvImage;

// Result of a segmentation: levels `0..=max_level`, level 0 being singletons.
typedef struct McvSequence McvSequence;

// Per-level counters of a segmentation run.
typedef struct McvLevelStats {
  uint32_t level;
  uint64_t evaluations;
  uint64_t accepted_merges;
  uint64_t relabelled;
  uint64_t regions;
  bool coarsens_previous;
} McvLevelStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mcv_version(void);

// Message of the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *mcv_last_error(void);

// Decodes a PGM or PPM held in memory.
enum McvStatus mcv_image_load_pnm(const uint8_t *data, size_t len, struct McvImage **out);

// Reads a PGM or PPM file.
enum McvStatus mcv_image_read_pnm(const char *path, struct McvImage **out);

// Builds an image from `width * height * bands` interleaved row-major samples.
enum McvStatus mcv_image_new(uint32_t width,
                             uint32_t height,
                             uint32_t bands,
                             uint32_t max_value,
                             const double *samples,
                             struct McvImage **out);

// Writes the image dimensions; any output pointer may be NULL.
enum McvStatus mcv_image_shape(const struct McvImage *image,
                               uint32_t *width,
                               uint32_t *height,
                               uint32_t *bands);

void mcv_image_free(struct McvImage *image);

// New settings holding the library defaults.
struct McvConfig *mcv_config_new(void);

void mcv_config_free(struct McvConfig *config);

enum McvStatus mcv_config_set_max_level(struct McvConfig *config, uint32_t max_level);

enum McvStatus mcv_config_set_seed(struct McvConfig *config, uint64_t seed);

// `MCV_PERMUTATION_RASTER` or `MCV_PERMUTATION_RANDOM`.
enum McvStatus mcv_config_set_permutation(struct McvConfig *config, uint32_t kind);

// Visits pixels in the given zero-based row-major order. The array is
// copied; its length must equal the pixel count of the segmented image.
enum McvStatus mcv_config_set_explicit_permutation(struct McvConfig *config,
                                                   const uint32_t *indices,
                                                   size_t len);

// Per-pixel energy threshold; must be finite and non-negative.
enum McvStatus mcv_config_set_rho(struct McvConfig *config, double rho);

enum McvStatus mcv_config_set_temperature(struct McvConfig *config, double temperature);

// `MCV_METRIC_EUCLIDEAN` or `MCV_METRIC_PER_BAND_ABS`.
enum McvStatus mcv_config_set_metric(struct McvConfig *config, uint32_t metric);

// `MCV_EVAL_DIRECT` or `MCV_EVAL_PYRAMID`.
enum McvStatus mcv_config_set_eval_mode(struct McvConfig *config, uint32_t mode);

// `MCV_MERGE_LABEL_CENTER` or `MCV_MERGE_LABEL_FRESH`.
enum McvStatus mcv_config_set_merge_label(struct McvConfig *config, uint32_t label);

// 4 or 8; sets the adjacency window, the evaluation structuring element
// and the model neighbourhood together.
enum McvStatus mcv_config_set_neighborhood(struct McvConfig *config, uint32_t connectivity);

enum McvStatus mcv_config_set_workers(struct McvConfig *config, uint32_t workers);

enum McvStatus mcv_config_set_reshuffle_per_level(struct McvConfig *config, bool reshuffle);

// Segments `image`; `config` may be NULL for the defaults.
enum McvStatus mcv_segment(const struct McvImage *image,
                           const struct McvConfig *config,
                           struct McvSequence **out);

// Number of stored partitions, `max_level + 1`.
size_t mcv_sequence_level_count(const struct McvSequence *sequence);

// Copies the row-major labels of `level` into `out`, which must hold at
// least `width * height` entries. Labels are numbered from 0 in raster
// order of first occurrence.
enum McvStatus mcv_sequence_labels(const struct McvSequence *sequence,
                                   uint32_t level_index,
                                   uint32_t *out,
                                   size_t capacity);

// Counters of `level`, which runs from 1 to `max_level`.
enum McvStatus mcv_sequence_stats(const struct McvSequence *sequence,
                                  uint32_t level_index,
                                  struct McvLevelStats *out);

void mcv_sequence_free(struct McvSequence *sequence);

// Rand index of two row-major labelings on a `width × height` lattice.
enum McvStatus mcv_rand_index(const uint32_t *a,
                              const uint32_t *b,
                              uint32_t width,
                              uint32_t height,
                              double *out);

// 8-connected components of each class of a row-major class map, written
// to `out` (`width * height` entries) numbered from 0 in raster order.
enum McvStatus mcv_components(const uint32_t *classes,
                              uint32_t width,
                              uint32_t height,
                              uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCV_H */
