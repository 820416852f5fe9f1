#ifndef CIFSYN_H
#define CIFSYN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum CifsynStatus {
  CIFSYN_STATUS_OK = 0,
  CIFSYN_STATUS_NULL_POINTER = 1,
  CIFSYN_STATUS_INVALID_ARGUMENT = 2,
  CIFSYN_STATUS_CONFIG = 3,
  CIFSYN_STATUS_NOT_CONVERGED = 4,
  CIFSYN_STATUS_SOLVER_FAILURE = 5,
  CIFSYN_STATUS_VERIFICATION_FAILED = 6,
  CIFSYN_STATUS_IO = 7,
  CIFSYN_STATUS_BUFFER_TOO_SMALL = 8,
  CIFSYN_STATUS_PANIC = 9,
} CifsynStatus;

typedef enum CifsynMode {
  CIFSYN_MODE_JOINT = 0,
  CIFSYN_MODE_SCP_ONLY = 1,
} CifsynMode;

/**
 * Opaque run configuration.
 */
typedef struct CifsynConfig CifsynConfig;

/**
 * Opaque result of a synthesis run.
 */
typedef struct CifsynSolution CifsynSolution;

/**
 * Summary of a Monte Carlo verification.
 */
typedef struct CifsynVerifyReport {
  size_t samples;
  bool passed;
  bool contained;
  bool feasible;
  size_t worst_sample;
  size_t worst_node;
  double worst_containment;
  double min_state_margin;
  double min_input_margin;
} CifsynVerifyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *cifsyn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cifsyn_version(void);

/**
 * Benchmark configuration. Release with `cifsyn_config_free`.
 */
struct CifsynConfig *cifsyn_config_default(void);

/**
 * Parses a TOML configuration; `*out` receives a new handle on success.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CifsynStatus cifsyn_config_from_toml(const char *text, struct CifsynConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from this library, not used afterwards.
 */
void cifsyn_config_free(struct CifsynConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum CifsynStatus cifsyn_config_set_mode(struct CifsynConfig *cfg, enum CifsynMode mode);

/**
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum CifsynStatus cifsyn_config_set_seed(struct CifsynConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum CifsynStatus cifsyn_config_set_max_iterations(struct CifsynConfig *cfg, size_t n);

/**
 * Runs the synthesis loop. On `Ok` or `NotConverged`, `*out` receives a
 * solution handle to release with `cifsyn_solution_free`.
 *
 * # Safety
 * `cfg` must be a live configuration handle and `out` a valid pointer.
 */
enum CifsynStatus cifsyn_solve(const struct CifsynConfig *cfg, struct CifsynSolution **out);

/**
 * # Safety
 * `sol` must be null or a handle from this library, not used afterwards.
 */
void cifsyn_solution_free(struct CifsynSolution *sol);

/**
 * Number of intervals `N`; zero for a null handle.
 *
 * # Safety
 * `sol` must be null or a live solution handle.
 */
size_t cifsyn_solution_nodes(const struct CifsynSolution *sol);

/**
 * # Safety
 * `sol` must be null or a live solution handle.
 */
size_t cifsyn_solution_state_dim(const struct CifsynSolution *sol);

/**
 * # Safety
 * `sol` must be null or a live solution handle.
 */
size_t cifsyn_solution_input_dim(const struct CifsynSolution *sol);

/**
 * # Safety
 * `sol` must be null or a live solution handle.
 */
size_t cifsyn_solution_iterations(const struct CifsynSolution *sol);

/**
 * # Safety
 * `sol` must be null or a live solution handle.
 */
bool cifsyn_solution_converged(const struct CifsynSolution *sol);

/**
 * Nominal states, `(N+1)·n_x` values, node-major.
 *
 * # Safety
 * `sol` must be a live solution handle and `buf` hold `len` doubles.
 */
enum CifsynStatus cifsyn_solution_states(const struct CifsynSolution *sol, double *buf, size_t len);

/**
 * Nominal inputs, `N·n_u` values, node-major.
 *
 * # Safety
 * `sol` must be a live solution handle and `buf` hold `len` doubles.
 */
enum CifsynStatus cifsyn_solution_inputs(const struct CifsynSolution *sol, double *buf, size_t len);

/**
 * Certified shape `β_k Q_k`, `n_x·n_x` values, row-major.
 *
 * # Safety
 * `sol` must be a live solution handle and `buf` hold `len` doubles.
 */
enum CifsynStatus cifsyn_solution_shape(const struct CifsynSolution *sol,
                                        size_t node,
                                        double *buf,
                                        size_t len);

/**
 * Feedback gain `K_k`, `n_u·n_x` values, row-major.
 *
 * # Safety
 * `sol` must be a live solution handle and `buf` hold `len` doubles.
 */
enum CifsynStatus cifsyn_solution_gain(const struct CifsynSolution *sol,
                                       size_t node,
                                       double *buf,
                                       size_t len);

/**
 * Monte Carlo rollouts with held random unit disturbances. Returns
 * `VerificationFailed` when the report does not pass; `*report` is filled
 * either way.
 *
 * # Safety
 * `sol` must be a live solution handle and `report` a valid pointer.
 */
enum CifsynStatus cifsyn_solution_verify(const struct CifsynSolution *sol,
                                         size_t samples,
                                         uint64_t seed,
                                         struct CifsynVerifyReport *report);

/**
 * Writes the CSV/JSON solution bundle (without verification rows).
 *
 * # Safety
 * `sol` must be a live solution handle and `dir` a NUL-terminated path.
 */
enum CifsynStatus cifsyn_solution_write_bundle(const struct CifsynSolution *sol, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIFSYN_H */
