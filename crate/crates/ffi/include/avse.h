#ifndef AVSE_H
#define AVSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  AVSE_STATUS_OK = 0,
  AVSE_STATUS_NULL_POINTER = 1,
  AVSE_STATUS_INVALID_ARGUMENT = 2,
  AVSE_STATUS_SHAPE = 3,
  AVSE_STATUS_IO = 4,
  AVSE_STATUS_CORRUPT_DATA = 5,
  AVSE_STATUS_DEGENERATE_SIGNAL = 6,
  AVSE_STATUS_NON_FINITE = 7,
  AVSE_STATUS_PANIC = 8,
} AvseStatus;

/**
 * Built-in model sizes for `avse_model_init`.
 */
typedef enum {
  AVSE_PRESET_DEFAULT = 0,
  AVSE_PRESET_SMALL = 1,
  AVSE_PRESET_TINY = 2,
} AvsePreset;

/**
 * A model configuration with its parameters.
 */
typedef struct AvseModel AvseModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next `avse_*` call on the same thread.
 */
const char *avse_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *avse_version(void);

/**
 * Loads a checkpoint file into a new model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
AvseStatus avse_model_load(const char *path, AvseModel **out);

/**
 * Creates a freshly initialized model of a built-in size.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
AvseStatus avse_model_init(AvsePreset preset, uint64_t seed, AvseModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from `avse_model_*` not yet freed.
 */
void avse_model_free(AvseModel *model);

/**
 * Total number of scalar parameters.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
AvseStatus avse_model_parameter_count(const AvseModel *model, size_t *out);

/**
 * Sample rate the model was configured for.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
AvseStatus avse_model_sample_rate(const AvseModel *model, uint32_t *out);

/**
 * Enhances `samples` samples of noisy audio using `frame_count` grayscale
 * video frames of `height` x `width` (row-major, frame after frame).
 * Writes `samples` samples to `out`.
 *
 * # Safety
 * `model` must be a live handle; `audio` and `out` must hold `samples`
 * floats and `frames` must hold `frame_count * height * width` floats.
 */
AvseStatus avse_enhance(const AvseModel *model,
                        const float *audio,
                        size_t samples,
                        const float *frames,
                        size_t frame_count,
                        size_t height,
                        size_t width,
                        float *out);

/**
 * Scale-invariant SDR in dB, capped at +60.
 *
 * # Safety
 * `reference` and `estimate` must hold `len` floats; `out` must be valid.
 */
AvseStatus avse_si_sdr(const float *reference, const float *estimate, size_t len, double *out);

/**
 * Short-time objective intelligibility of `estimate` against `reference`.
 *
 * # Safety
 * `reference` and `estimate` must hold `len` floats; `out` must be valid.
 */
AvseStatus avse_stoi(const float *reference,
                     const float *estimate,
                     size_t len,
                     uint32_t sample_rate_hz,
                     double *out);

/**
 * Mixes `target` with `interferer` (looped or cut to the target length)
 * at `snr_db`, writing `target_len` samples to `out`.
 *
 * # Safety
 * `target` and `out` must hold `target_len` floats and `interferer`
 * `interferer_len` floats.
 */
AvseStatus avse_mix(const float *target,
                    size_t target_len,
                    const float *interferer,
                    size_t interferer_len,
                    double snr_db,
                    uint32_t sample_rate_hz,
                    uint64_t seed,
                    float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVSE_H */
