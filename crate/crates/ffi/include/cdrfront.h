#ifndef CDRFRONT_H
#define CDRFRONT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdrfStatus {
  CDRF_STATUS_OK = 0,
  CDRF_STATUS_NULL_POINTER = 1,
  CDRF_STATUS_INVALID_ARGUMENT = 2,
  CDRF_STATUS_CONFIG = 3,
  CDRF_STATUS_IO = 4,
  CDRF_STATUS_PROCESSING = 5,
  CDRF_STATUS_PANIC = 6,
} CdrfStatus;

/**
 * Opaque enhancer handle.
 */
typedef struct CdrfEnhancer CdrfEnhancer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL if none.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *cdrf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdrf_version(void);

/**
 * Create an enhancer for `num_mics` microphones.
 *
 * `positions` holds `num_mics` consecutive `x, y, z` triples in meters.
 * All other settings take their defaults: SRP-PHAT look direction, noise
 * context in the first 500 ms, postfilter enabled.
 *
 * # Safety
 * `positions` must point to `3 * num_mics` readable doubles and `out` to
 * writable storage for one pointer.
 */
enum CdrfStatus cdrf_enhancer_new(const double *positions,
                                  size_t num_mics,
                                  uint32_t sample_rate,
                                  struct CdrfEnhancer **out);

/**
 * Create an enhancer from a TOML pipeline config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable storage for one
 * pointer.
 */
enum CdrfStatus cdrf_enhancer_from_config(const char *path, struct CdrfEnhancer **out);

/**
 * Release an enhancer. NULL is ignored.
 *
 * # Safety
 * `handle` must come from `cdrf_enhancer_new*` and not be used afterwards.
 */
void cdrf_enhancer_free(struct CdrfEnhancer *handle);

/**
 * Number of input channels the enhancer expects, 0 for NULL.
 *
 * # Safety
 * `handle` must be NULL or a live enhancer.
 */
size_t cdrf_enhancer_num_channels(const struct CdrfEnhancer *handle);

/**
 * Steer at a fixed direction, in degrees.
 *
 * # Safety
 * `handle` must be a live enhancer.
 */
enum CdrfStatus cdrf_enhancer_set_doa(struct CdrfEnhancer *handle,
                                      double azimuth_deg,
                                      double elevation_deg);

/**
 * Estimate the look direction with SRP-PHAT on every call.
 *
 * # Safety
 * `handle` must be a live enhancer.
 */
enum CdrfStatus cdrf_enhancer_use_srp_phat(struct CdrfEnhancer *handle);

/**
 * Set the postfilter overestimation factor and gain floor. `mu = 0`
 * leaves the beamformer output untouched.
 *
 * # Safety
 * `handle` must be a live enhancer.
 */
enum CdrfStatus cdrf_enhancer_set_postfilter(struct CdrfEnhancer *handle, double mu, double g_min);

/**
 * Noise-only interval in seconds used for the noise covariance.
 *
 * # Safety
 * `handle` must be a live enhancer.
 */
enum CdrfStatus cdrf_enhancer_set_noise_context(struct CdrfEnhancer *handle,
                                                double start_s,
                                                double end_s);

/**
 * Enhance one utterance.
 *
 * `input` holds `num_samples * num_channels` interleaved samples; `output`
 * receives `num_samples` mono samples. If `doa_out` is not NULL it receives
 * the azimuth and elevation (degrees) that were used.
 *
 * # Safety
 * `handle` must be a live enhancer; `input`, `output` and (if non-NULL)
 * `doa_out` must point to buffers of the stated sizes.
 */
enum CdrfStatus cdrf_enhancer_process(struct CdrfEnhancer *handle,
                                      const float *input,
                                      size_t num_samples,
                                      size_t num_channels,
                                      float *output,
                                      double *doa_out);

/**
 * CDR of one microphone pair from its coherence estimate and the diffuse
 * coherence model value.
 */
double cdrf_estimate_cdr_pair(double gamma_re, double gamma_im, double gamma_n, double cdr_max);

/**
 * Wiener gain for a given SNR (or CDR).
 */
double cdrf_wiener_gain(double snr, double mu, double g_min);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDRFRONT_H */
