#ifndef NPG_H
#define NPG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NpgStatus {
  NPG_STATUS_OK = 0,
  NPG_STATUS_NULL_POINTER = 1,
  NPG_STATUS_INVALID_UTF8 = 2,
  NPG_STATUS_INVALID_ARGUMENT = 3,
  NPG_STATUS_CONFIG = 4,
  NPG_STATUS_INVALID_MODEL = 5,
  NPG_STATUS_NUMERICAL = 6,
  NPG_STATUS_BUFFER_TOO_SMALL = 7,
  NPG_STATUS_PANIC = 8,
} NpgStatus;

/**
 * A finite truncation of a model.
 */
typedef struct NpgMdp NpgMdp;

/**
 * A validated queueing model.
 */
typedef struct NpgModel NpgModel;

/**
 * A stochastic policy on a truncation.
 */
typedef struct NpgPolicy NpgPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *npg_last_error(void);

/**
 * Library version as a static string.
 */
const char *npg_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void npg_string_free(char *s);

/**
 * Builds a preset model. `alpha > 0` selects the alpha-moment reward,
 * otherwise the negative total queue length is used.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum NpgStatus npg_model_preset(const char *name, double alpha, struct NpgModel **out);

/**
 * Builds a model from JSON parameters (`arrivals`, `services`, `option_names`, `reward`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum NpgStatus npg_model_from_json(const char *json, struct NpgModel **out);

/**
 * # Safety
 * `model` must come from this library and not have been freed. Null is ignored.
 */
void npg_model_free(struct NpgModel *model);

/**
 * Largest `eps` with `(1 + eps) lambda` inside the service-rate hull.
 * Negative values are reported with status `Ok`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum NpgStatus npg_model_capacity_margin(const struct NpgModel *model, double *out);

/**
 * Truncates every queue at `buffer`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum NpgStatus npg_model_truncate(const struct NpgModel *model,
                                  uint32_t buffer,
                                  struct NpgMdp **out);

/**
 * # Safety
 * `mdp` must come from this library and not have been freed. Null is ignored.
 */
void npg_mdp_free(struct NpgMdp *mdp);

/**
 * # Safety
 * `mdp` must be a live handle; the out pointers must be writable.
 */
enum NpgStatus npg_mdp_shape(const struct NpgMdp *mdp, size_t *states, size_t *actions);

/**
 * Optimal average reward of the truncation.
 *
 * # Safety
 * `mdp` must be a live handle; `out` must be writable.
 */
enum NpgStatus npg_mdp_optimal_average_reward(const struct NpgMdp *mdp, double *out);

/**
 * # Safety
 * `mdp` must be a live handle; `out` must be writable.
 */
enum NpgStatus npg_policy_uniform(const struct NpgMdp *mdp, struct NpgPolicy **out);

/**
 * MaxWeight policy mixed with the uniform policy at weight `mix` in (0, 1].
 *
 * # Safety
 * `model` and `mdp` must be live handles, `mdp` a truncation of `model`;
 * `out` must be writable.
 */
enum NpgStatus npg_policy_maxweight(const struct NpgModel *model,
                                    const struct NpgMdp *mdp,
                                    double mix,
                                    struct NpgPolicy **out);

/**
 * # Safety
 * `policy` must come from this library and not have been freed. Null is ignored.
 */
void npg_policy_free(struct NpgPolicy *policy);

/**
 * Copies the action probabilities of `state` into `buf` of length `len`.
 *
 * # Safety
 * `policy` must be a live handle; `buf` must hold `len` doubles.
 */
enum NpgStatus npg_policy_row(const struct NpgPolicy *policy,
                              size_t state,
                              double *buf,
                              size_t len);

/**
 * Average reward of `policy`, and its relative values when `values` is non-null
 * (`len` must then be at least the state count).
 *
 * # Safety
 * Handles must be live; `values`, if non-null, must hold `len` doubles.
 */
enum NpgStatus npg_evaluate(const struct NpgMdp *mdp,
                            const struct NpgPolicy *policy,
                            double *average_reward,
                            double *values,
                            size_t len);

/**
 * Runs `horizon` NPG iterations with the same step base `beta > 1` at every
 * state and returns the final policy.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum NpgStatus npg_run_constant_step(const struct NpgMdp *mdp,
                                     const struct NpgPolicy *initial,
                                     size_t horizon,
                                     double beta,
                                     struct NpgPolicy **out);

/**
 * Runs the full verification described by a TOML experiment text and returns
 * the JSON report. `passed` receives 1 when no check failed, 0 otherwise.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; out pointers must be writable.
 */
enum NpgStatus npg_verify(const char *config_toml, char **report_json, int *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPG_H */
