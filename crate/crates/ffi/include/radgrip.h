#ifndef RADGRIP_H
#define RADGRIP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_POINTER = 1,
  RG_STATUS_INVALID_ARGUMENT = 2,
  RG_STATUS_PARSE = 3,
  RG_STATUS_CONFIG = 4,
  RG_STATUS_IO = 5,
  /**
   * Measurement outside its admissible domain (stale, aliased, gated).
   */
  RG_STATUS_DOMAIN = 6,
  RG_STATUS_NUMERIC = 7,
  RG_STATUS_PANIC = 8,
} RgStatus;

/**
 * Opaque estimator handle.
 */
typedef struct RgEstimator RgEstimator;

typedef struct RgRadarPoint {
  double range;
  double azimuth;
  double elevation;
  double doppler;
  double snr;
} RgRadarPoint;

/**
 * One estimate. Slip, force and side-slip fields are NaN below the
 * lateral-force speed gate.
 */
typedef struct RgEstimate {
  double t;
  double vx;
  double vy;
  double r;
  double bx;
  double by;
  double br;
  double alpha_f;
  double alpha_r;
  double Fyf;
  double Fyr;
  double BCD_f;
  double BCD_r;
  double beta;
} RgEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *rg_last_error(void);

/**
 * Library version as a static string.
 */
const char *rg_version(void);

/**
 * Creates an estimator from a TOML configuration; NULL selects the
 * built-in defaults.
 *
 * # Safety
 * `config_toml` is NULL or a nul-terminated string; `out` is writable.
 */
enum RgStatus rg_estimator_new(const char *config_toml, struct RgEstimator **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `h` was returned by `rg_estimator_new` and is not used afterwards.
 */
void rg_estimator_free(struct RgEstimator *h);

/**
 * Overrides the tire parameters, twelve values `B C D E Sh Sv` front
 * then rear. Only valid before the first event.
 *
 * # Safety
 * `params` points to 12 readable doubles.
 */
enum RgStatus rg_estimator_set_params(struct RgEstimator *h, const double *params);

/**
 * # Safety
 * `h` is a live handle.
 */
enum RgStatus rg_estimator_push_imu(struct RgEstimator *h,
                                    double t,
                                    double ax,
                                    double ay,
                                    double r);

/**
 * Logged steering angle, before the steering ratio is applied.
 *
 * # Safety
 * `h` is a live handle.
 */
enum RgStatus rg_estimator_push_steering(struct RgEstimator *h, double t, double delta);

/**
 * # Safety
 * `h` is a live handle; `points` holds `n` entries (may be NULL if `n` is 0).
 */
enum RgStatus rg_estimator_push_radar(struct RgEstimator *h,
                                      size_t radar_id,
                                      double t_capture,
                                      double t_receive,
                                      const struct RgRadarPoint *points,
                                      size_t n);

/**
 * Pushes one record in the text log format.
 *
 * # Safety
 * `h` is a live handle; `line` is nul-terminated.
 */
enum RgStatus rg_estimator_push_record(struct RgEstimator *h, const char *line);

/**
 * Flushes every state not yet reported into the pending queue. Call at
 * the end of a log.
 *
 * # Safety
 * `h` is a live handle.
 */
enum RgStatus rg_estimator_finish(struct RgEstimator *h);

/**
 * Number of estimates waiting to be read.
 *
 * # Safety
 * `h` is a live handle; `count` is writable.
 */
enum RgStatus rg_estimator_pending(struct RgEstimator *h, size_t *count);

/**
 * Moves up to `capacity` estimates, oldest first, into `out` and stores
 * how many were written.
 *
 * # Safety
 * `h` is a live handle; `out` has room for `capacity` entries; `written`
 * is writable.
 */
enum RgStatus rg_estimator_poll(struct RgEstimator *h,
                                struct RgEstimate *out,
                                size_t capacity,
                                size_t *written);

/**
 * Current tire parameters, twelve values as in `rg_estimator_set_params`.
 *
 * # Safety
 * `h` is a live handle; `out` has room for 12 doubles.
 */
enum RgStatus rg_estimator_params(struct RgEstimator *h, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADGRIP_H */
