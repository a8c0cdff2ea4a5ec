#ifndef PDTSC_H
#define PDTSC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum PdtscStatus {
  PDTSC_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  PDTSC_STATUS_NULL_POINTER = 1,
  /*
   An argument was out of range or not valid UTF-8.
   */
  PDTSC_STATUS_INVALID_ARGUMENT = 2,
  /*
   A caller-supplied buffer has the wrong length.
   */
  PDTSC_STATUS_BUFFER_SIZE = 3,
  /*
   `step` on a finished episode.
   */
  PDTSC_STATUS_EPISODE_DONE = 4,
  /*
   Reading or writing a file failed.
   */
  PDTSC_STATUS_IO = 5,
  /*
   A checkpoint was malformed or held a different algorithm.
   */
  PDTSC_STATUS_CHECKPOINT = 6,
  /*
   Training or an update diverged.
   */
  PDTSC_STATUS_TRAINING = 7,
  /*
   The library panicked; the handle involved should be freed.
   */
  PDTSC_STATUS_PANIC = 8,
} PdtscStatus;

/*
 Opaque agent handle.
 */
typedef struct PdtscAgent PdtscAgent;

/*
 Opaque environment handle.
 */
typedef struct PdtscEnv PdtscEnv;

/*
 Outcome of one environment step.
 */
typedef struct PdtscStep {
  /*
   Reward under the environment's reward mode (partial by default).
   */
  double reward;
  double reward_full;
  double reward_partial;
  bool done;
} PdtscStep;

/*
 Mean waiting times (seconds) in the current episode, counting vehicles
 still inside the intersection up to the current clock. NaN when a class
 has no vehicles.
 */
typedef struct PdtscWaits {
  double all;
  double detected;
  double undetected;
  uint64_t vehicles;
} PdtscWaits;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null if none. The
 pointer stays valid until the next failing call on this thread or
 [`pdtsc_clear_error`].
 */
const char *pdtsc_last_error_message(void);

void pdtsc_clear_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pdtsc_version(void);

/*
 Creates an environment for `scenario` ("sparse", "medium" or "dense")
 with one-hour episodes.

 # Safety
 `scenario` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PdtscStatus pdtsc_env_new(const char *scenario,
                               double detection_rate,
                               uint64_t seed,
                               struct PdtscEnv **out);

/*
 # Safety
 `env` must be null or a handle from [`pdtsc_env_new`] not yet freed.
 */
void pdtsc_env_free(struct PdtscEnv *env);

/*
 Number of values in an observation; 0 for a null handle.

 # Safety
 `env` must be null or a live handle.
 */
size_t pdtsc_env_observation_len(const struct PdtscEnv *env);

/*
 Restarts the episode from an empty intersection with a new seed and
 writes the first observation.

 # Safety
 `env` must be a live handle and `obs_out` point to `obs_len` doubles.
 */
enum PdtscStatus pdtsc_env_reset(struct PdtscEnv *env,
                                 uint64_t seed,
                                 double *obs_out,
                                 size_t obs_len);

/*
 Advances one step. `action` is 0 (keep) or 1 (switch).

 # Safety
 `env` must be a live handle, `obs_out` point to `obs_len` doubles and
 `step_out` to a writable [`PdtscStep`].
 */
enum PdtscStatus pdtsc_env_step(struct PdtscEnv *env,
                                uint32_t action,
                                double *obs_out,
                                size_t obs_len,
                                struct PdtscStep *step_out);

/*
 Changes the detection probability of vehicles spawned from now on.

 # Safety
 `env` must be a live handle.
 */
enum PdtscStatus pdtsc_env_set_detection_rate(struct PdtscEnv *env, double rate);

/*
 # Safety
 `env` must be a live handle and `out` a writable [`PdtscWaits`].
 */
enum PdtscStatus pdtsc_env_waits(const struct PdtscEnv *env, struct PdtscWaits *out);

/*
 Creates an untrained agent with default hyperparameters. `algorithm` is
 one of "dql", "a2c", "ppo", "acktr" or "fixed".

 # Safety
 `algorithm` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PdtscStatus pdtsc_agent_new(const char *algorithm,
                                 uint64_t seed,
                                 size_t observation_len,
                                 struct PdtscAgent **out);

/*
 # Safety
 `agent` must be null or a handle not yet freed.
 */
void pdtsc_agent_free(struct PdtscAgent *agent);

/*
 Trains `agent` for `steps` environment steps on fresh episodes of the
 configuration `env` was built with. `env` itself is not stepped.

 # Safety
 `agent` and `env` must be live handles.
 */
enum PdtscStatus pdtsc_agent_train(struct PdtscAgent *agent,
                                   const struct PdtscEnv *env,
                                   uint64_t steps,
                                   uint64_t seed);

/*
 Chooses an action (0 keep, 1 switch) for an observation. With
 `explore` false the choice is deterministic.

 # Safety
 `agent` must be a live handle, `obs` point to `obs_len` doubles and
 `action_out` be writable.
 */
enum PdtscStatus pdtsc_agent_act(struct PdtscAgent *agent,
                                 const double *obs,
                                 size_t obs_len,
                                 bool explore,
                                 uint32_t *action_out);

/*
 Environment steps the agent has learned from; 0 for a null handle.

 # Safety
 `agent` must be null or a live handle.
 */
uint64_t pdtsc_agent_steps(const struct PdtscAgent *agent);

/*
 # Safety
 `agent` must be a live handle and `path` a NUL-terminated string.
 */
enum PdtscStatus pdtsc_agent_save(const struct PdtscAgent *agent, const char *path);

/*
 Loads a checkpoint. When `expected_algorithm` is non-null the stored
 algorithm must match it.

 # Safety
 `path` must be a NUL-terminated string, `expected_algorithm` null or a
 NUL-terminated string, and `out` a valid pointer.
 */
enum PdtscStatus pdtsc_agent_load(const char *path,
                                  const char *expected_algorithm,
                                  struct PdtscAgent **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDTSC_H */
