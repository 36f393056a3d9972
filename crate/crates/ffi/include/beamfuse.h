/* C interface to the beamfuse simulator and models. */

#ifndef BEAMFUSE_H
#define BEAMFUSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BfStatus {
  /**
   * Success.
   */
  BfOk = 0,
  /**
   * A required pointer argument was null.
   */
  BfNullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  BfBadString = 2,
  /**
   * The input was structurally valid but unusable (bad file, bad index,
   * shape mismatch).
   */
  BfBadInput = 3,
  /**
   * The operation panicked; state may be stale but memory is intact.
   */
  BfPanic = 4,
} BfStatus;

/**
 * An aligned, chronologically split training set.
 */
typedef struct BfDataset BfDataset;

/**
 * A trained model rebuilt from a checkpoint, with its metadata.
 */
typedef struct BfModel BfModel;

/**
 * A loaded propagation world plus the codebook built from its beam
 * parameters.
 */
typedef struct BfScene BfScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the current thread's last error message (UTF-8, NUL-terminated)
 * into `buf` and returns the full message length in bytes, excluding the
 * NUL. A zero `cap` leaves `buf` untouched; longer messages are cut to fit.
 */
size_t bf_last_error(char *buf, size_t cap);

/**
 * Loads a scene description and builds its beam codebook.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BfStatus bf_scene_load(const char *path, struct BfScene **out);

/**
 * Frees a scene handle. Null is a no-op.
 *
 * # Safety
 * `scene` must come from `bf_scene_load` and not be freed twice.
 */
void bf_scene_free(struct BfScene *scene);

/**
 * Number of beams in the scene's codebook; 0 for a null handle.
 *
 * # Safety
 * `scene` must be a live handle or null.
 */
size_t bf_scene_beam_count(const struct BfScene *scene);

/**
 * Runs an exhaustive sweep at `(x, y)` and reports the strongest beam and
 * its SNR in dB.
 *
 * # Safety
 * `scene` must be a live handle; `out_beam` and `out_snr_db` must be valid
 * or null (null outputs are skipped).
 */
enum BfStatus bf_scene_best_beam(const struct BfScene *scene,
                                 double x,
                                 double y,
                                 uint32_t *out_beam,
                                 double *out_snr_db);

/**
 * Loads a dataset file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BfStatus bf_dataset_load(const char *path, struct BfDataset **out);

/**
 * Frees a dataset handle. Null is a no-op.
 *
 * # Safety
 * `dataset` must come from `bf_dataset_load` and not be freed twice.
 */
void bf_dataset_free(struct BfDataset *dataset);

/**
 * Total aligned samples; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t bf_dataset_len(const struct BfDataset *dataset);

/**
 * Samples in the chronological training prefix; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t bf_dataset_train_count(const struct BfDataset *dataset);

/**
 * True label of sample `index`; the beam count for out-of-range queries.
 *
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t bf_dataset_label(const struct BfDataset *dataset, size_t index);

/**
 * Rebuilds the model stored in a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BfStatus bf_model_load(const char *path, struct BfModel **out);

/**
 * Frees a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must come from `bf_model_load` and not be freed twice.
 */
void bf_model_free(struct BfModel *model);

/**
 * Output width of a prediction; 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t bf_model_classes(const struct BfModel *model);

/**
 * Anchors consumed per prediction; 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t bf_model_window(const struct BfModel *model);

/**
 * Scores the window of samples ending at `anchor` (so `anchor` must be at
 * least `window - 1`) and writes a probability per beam into `probs`,
 * which must hold `bf_model_classes` values.
 *
 * # Safety
 * `model` and `dataset` must be live handles; `probs` must point to at
 * least `probs_len` writable doubles.
 */
enum BfStatus bf_model_predict(struct BfModel *model,
                               const struct BfDataset *dataset,
                               size_t anchor,
                               double *probs,
                               size_t probs_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMFUSE_H */
