#ifndef DCPG_H
#define DCPG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DcpgPreset {
  DCPG_PRESET_DESK = 0,
  DCPG_PRESET_PAPER = 1,
} DcpgPreset;

typedef enum DcpgSplit {
  DCPG_SPLIT_TRAIN = 0,
  DCPG_SPLIT_TEST = 1,
} DcpgSplit;

/**
 * Result code of every call.
 */
typedef enum DcpgStatus {
  DCPG_STATUS_OK = 0,
  DCPG_STATUS_NULL_POINTER = 1,
  DCPG_STATUS_INVALID_CONFIG = 2,
  DCPG_STATUS_DIVERGED = 3,
  DCPG_STATUS_INVALID_ARGUMENT = 4,
  DCPG_STATUS_IO = 5,
  DCPG_STATUS_FINISHED = 6,
  DCPG_STATUS_INTERNAL = 7,
} DcpgStatus;

/**
 * Opaque training configuration.
 */
typedef struct DcpgConfig DcpgConfig;

/**
 * Opaque trainer.
 */
typedef struct DcpgTrainer DcpgTrainer;

/**
 * One row of training metrics; unavailable values are NaN.
 */
typedef struct DcpgMetrics {
  uint64_t num_steps;
  double train_episode_rewards_mean;
  double test_episode_rewards_mean;
  double policy_loss;
  double value_loss;
  double c_pi;
  double c_v;
  double dynamics_loss;
  double entropy;
  double predicted_init_value;
  double empirical_init_return;
} DcpgMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *dcpg_last_error(void);

/**
 * Creates a configuration from a preset.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DcpgStatus dcpg_config_preset(enum DcpgPreset preset, struct DcpgConfig **out);

/**
 * Parses config text on top of the desk preset.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` valid for a pointer write.
 */
enum DcpgStatus dcpg_config_parse(const char *source, struct DcpgConfig **out);

/**
 * Sets one key, named `section.key`, from its text form.
 *
 * # Safety
 * `config` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum DcpgStatus dcpg_config_set(struct DcpgConfig *config, const char *key, const char *value);

/**
 * Writes the hex config hash (64 characters plus NUL) into `out`.
 *
 * # Safety
 * `config` must come from this library and `out` must hold `len` bytes.
 */
enum DcpgStatus dcpg_config_hash(const struct DcpgConfig *config, char *out, size_t len);

/**
 * # Safety
 * `config` must come from this library (or be null) and not be used after.
 */
void dcpg_config_free(struct DcpgConfig *config);

/**
 * Builds a trainer; the configuration is copied.
 *
 * # Safety
 * `config` must come from this library and `out` be valid for a pointer write.
 */
enum DcpgStatus dcpg_trainer_new(const struct DcpgConfig *config, struct DcpgTrainer **out);

/**
 * Collects one rollout and runs its updates. `metrics` may be null.
 *
 * # Safety
 * `trainer` must come from this library; `metrics` must be null or valid
 * for a write.
 */
enum DcpgStatus dcpg_trainer_step(struct DcpgTrainer *trainer, struct DcpgMetrics *metrics);

/**
 * Non-zero once the configured step budget is spent; 0 for a null handle.
 *
 * # Safety
 * `trainer` must come from this library or be null.
 */
int32_t dcpg_trainer_is_finished(const struct DcpgTrainer *trainer);

/**
 * Environment steps taken so far.
 *
 * # Safety
 * `trainer` must come from this library and `out` be valid for a write.
 */
enum DcpgStatus dcpg_trainer_num_steps(const struct DcpgTrainer *trainer, uint64_t *out);

/**
 * Mean undiscounted return over `episodes` episodes on a level split.
 *
 * # Safety
 * `trainer` must come from this library and `mean` be valid for a write.
 */
enum DcpgStatus dcpg_trainer_evaluate(const struct DcpgTrainer *trainer,
                                      enum DcpgSplit split,
                                      size_t episodes,
                                      uint64_t seed,
                                      double *mean);

/**
 * Writes a checkpoint file.
 *
 * # Safety
 * `trainer` must come from this library; `path` must be a NUL-terminated string.
 */
enum DcpgStatus dcpg_trainer_save(const struct DcpgTrainer *trainer, const char *path);

/**
 * Restores a trainer from a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for a pointer write.
 */
enum DcpgStatus dcpg_trainer_load(const char *path, struct DcpgTrainer **out);

/**
 * # Safety
 * `trainer` must come from this library (or be null) and not be used after.
 */
void dcpg_trainer_free(struct DcpgTrainer *trainer);

/**
 * Generalized advantage estimation over a time-major `steps x envs`
 * rollout. `dones` holds 0 or 1 per transition, `bootstrap` one value per
 * environment. Writes `steps * envs` advantages and targets.
 *
 * # Safety
 * Every array must hold the element count stated above.
 */
enum DcpgStatus dcpg_gae(const double *rewards,
                         const double *values,
                         const uint8_t *dones,
                         const double *bootstrap,
                         size_t steps,
                         size_t envs,
                         double gamma,
                         double lambda,
                         double *advantages,
                         double *targets);

/**
 * Gradient stiffness (clamped cosine) of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must hold `len` elements and `out` be valid for a write.
 */
enum DcpgStatus dcpg_stiffness(const double *a, const double *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCPG_H */
