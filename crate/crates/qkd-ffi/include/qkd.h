#ifndef QKD_FFI_H
#define QKD_FFI_H

/* Generated by cbindgen from the qkd-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Protocol selector for `qkd_protocol_eval`.
 */
typedef enum QkdProtocol {
  QKD_PROTOCOL_BB84 = 0,
  QKD_PROTOCOL_EKERT_CHSH = 1,
  QKD_PROTOCOL_EKERT_WIGNER = 2,
} QkdProtocol;

/**
 * Status codes returned by every API call.
 */
typedef enum QkdStatus {
  QKD_STATUS_OK = 0,
  QKD_STATUS_NULL_POINTER = 1,
  QKD_STATUS_INVALID_UTF8 = 2,
  QKD_STATUS_INVALID_ARGUMENT = 3,
  QKD_STATUS_PARSE_ERROR = 4,
  QKD_STATUS_ZERO_COINCIDENCE_RATE = 5,
  QKD_STATUS_UNCORRECTABLE = 6,
  QKD_STATUS_IO_ERROR = 7,
  QKD_STATUS_UNKNOWN_PRESET = 8,
} QkdStatus;

/**
 * Opaque experiment configuration handle.
 */
typedef struct QkdConfig QkdConfig;

/**
 * Sifted key (expected counts), error fraction and accidental fraction.
 * `qabr` is NaN when undefined (no coincidences).
 */
typedef struct QkdProtocolResult {
  double sifted_key;
  double qber;
  double qabr;
} QkdProtocolResult;

/**
 * CHSH and Wigner parameters with their normalized security margins.
 */
typedef struct QkdSecurityResult {
  double s;
  double s_prime;
  double w_param;
  double s_norm;
  double w_norm;
} QkdSecurityResult;

/**
 * Error-correction outcome. `converged` is 1 when the residual error
 * reached the target within the pass cap, 0 otherwise.
 */
typedef struct QkdCorrectionResult {
  uint32_t passes;
  uint8_t converged;
  double corrected_key;
  double residual_qber;
  double residual_qabr;
} QkdCorrectionResult;

/**
 * Tallies of one event-level simulation run.
 */
typedef struct QkdEventTally {
  /**
   * Counts per detector (`1a, 2a, 1b, 2b`).
   */
  uint64_t singles[4];
  /**
   * Coincidences per pair (`1a1b, 1a2b, 2a1b, 2a2b`).
   */
  uint64_t coincidences[4];
  /**
   * Same-emission subset of `coincidences`.
   */
  uint64_t true_coincidences[4];
  /**
   * Live seconds per channel (`alice, bob`).
   */
  double live_time[2];
  double duration;
  uint64_t seed;
} QkdEventTally;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *qkd_last_error_message(void);

/**
 * Creates a configuration from a bundled preset (`fig3`, `fig5`, `fig6`,
 * `fig7`).
 *
 * # Safety
 * `name` must be a valid NUL-terminated string; `out` must be writable.
 */
enum QkdStatus qkd_config_preset(const char *name, struct QkdConfig **out);

/**
 * Loads a configuration file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be writable.
 */
enum QkdStatus qkd_config_load(const char *path, struct QkdConfig **out);

/**
 * Overrides one configuration key, using the same `key`/`value` strings as
 * the file format (including `_ns`/`_khz` suffixes). The handle is left
 * unchanged if the new value does not validate.
 *
 * # Safety
 * `cfg` must be a live handle from this library; `key` and `value` must be
 * valid NUL-terminated strings.
 */
enum QkdStatus qkd_config_set(struct QkdConfig *cfg, const char *key, const char *value);

/**
 * Releases a configuration handle. Accepts null.
 *
 * # Safety
 * `cfg` must be null or a live handle from this library; it must not be
 * used afterwards.
 */
void qkd_config_free(struct QkdConfig *cfg);

/**
 * Derived correlation level of Alice's channel.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum QkdStatus qkd_config_alpha_a(const struct QkdConfig *cfg, double *out);

/**
 * Joint detection probabilities for one analyzer setting, written to
 * `out[4]` in pair order.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must point to 4 writable doubles.
 */
enum QkdStatus qkd_joint_probabilities(const struct QkdConfig *cfg,
                                       double theta_a,
                                       double theta_b,
                                       double *out);

/**
 * Total singles rates per detector, written to `out[4]` in detector order.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must point to 4 writable doubles.
 */
enum QkdStatus qkd_singles_rates(const struct QkdConfig *cfg,
                                 double theta_a,
                                 double theta_b,
                                 double *out);

/**
 * True, accidental and total coincidence rates per pair, written to three
 * caller arrays of 4 doubles each (pair order).
 *
 * # Safety
 * `cfg` must be a live handle; each output must point to 4 writable
 * doubles.
 */
enum QkdStatus qkd_coincidence_rates(const struct QkdConfig *cfg,
                                     double theta_a,
                                     double theta_b,
                                     double *true_out,
                                     double *accidental_out,
                                     double *total_out);

/**
 * Sifted key, QBER and QABR for one protocol at base angle `theta_a`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum QkdStatus qkd_protocol_eval(const struct QkdConfig *cfg,
                                 enum QkdProtocol protocol,
                                 double theta_a,
                                 struct QkdProtocolResult *out);

/**
 * CHSH and Wigner parameters with normalized margins at base angle
 * `theta_a`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum QkdStatus qkd_security_eval(const struct QkdConfig *cfg,
                                 double theta_a,
                                 struct QkdSecurityResult *out);

/**
 * Parity-pass error correction on a sifted key of expected size `key` with
 * error fraction `qber` and accidental fraction `qabr`.
 *
 * # Safety
 * `out` must be writable.
 */
enum QkdStatus qkd_correct(double key,
                           double qber,
                           double qabr,
                           double target,
                           struct QkdCorrectionResult *out);

/**
 * Runs the event-level simulator for `duration` seconds at the given
 * analyzer setting and seed.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum QkdStatus qkd_simulate(const struct QkdConfig *cfg,
                            double theta_a,
                            double theta_b,
                            double duration,
                            uint64_t seed,
                            struct QkdEventTally *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QKD_FFI_H */
