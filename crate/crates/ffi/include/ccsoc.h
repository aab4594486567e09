#ifndef CCSOC_H
#define CCSOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Values 1 through 6 match the CLI exit codes.
 */
typedef enum {
  CCSOC_STATUS_OK = 0,
  CCSOC_STATUS_IO = 1,
  CCSOC_STATUS_CONFIG = 2,
  CCSOC_STATUS_INFEASIBLE = 3,
  CCSOC_STATUS_RISK_TOO_SMALL = 4,
  CCSOC_STATUS_BACKEND = 5,
  CCSOC_STATUS_VALIDATION_FAILED = 6,
  CCSOC_STATUS_NULL_POINTER = 7,
  CCSOC_STATUS_INVALID_UTF8 = 8,
  CCSOC_STATUS_OUT_OF_RANGE = 9,
  CCSOC_STATUS_PANIC = 10,
} CcsocStatus;

typedef enum {
  CCSOC_METHOD_PROPOSED = 0,
  CCSOC_METHOD_SCENARIO = 1,
  CCSOC_METHOD_CANTELLI = 2,
} CcsocMethod;

/**
 * A parsed scenario and, once needed, its disturbance samples.
 */
typedef struct CcsocScenario CcsocScenario;

typedef struct CcsocSolution CcsocSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *ccsoc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ccsoc_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ccsoc_string_free(char *s);

/**
 * Parses scenario text. Relative sample CSV paths resolve against
 * `base_dir`, which may be NULL for the working directory.
 *
 * # Safety
 * `text` and a non-null `base_dir` must be NUL-terminated; `out` must be
 * writable.
 */
CcsocStatus ccsoc_scenario_from_toml(const char *text, const char *base_dir, CcsocScenario **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
CcsocStatus ccsoc_scenario_from_path(const char *path, CcsocScenario **out);

/**
 * # Safety
 * `scenario` must come from this library and not have been freed.
 */
void ccsoc_scenario_free(CcsocScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_scenario_vehicle_count(const CcsocScenario *scenario, size_t *out);

/**
 * Length of one vehicle's stacked control sequence, `N·m`.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_scenario_control_len(const CcsocScenario *scenario, size_t *out);

/**
 * The scenario's config hash (hex SHA-256 of the text).
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_scenario_hash(const CcsocScenario *scenario, char **out);

/**
 * Solves the scenario. With `use_seed` false the config's sample seed is
 * used. The handle caches the loaded samples between calls.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_solve(CcsocScenario *scenario,
                        CcsocMethod method,
                        bool use_seed,
                        uint64_t seed,
                        CcsocSolution **out);

/**
 * # Safety
 * `solution` must come from this library and not have been freed.
 */
void ccsoc_solution_free(CcsocSolution *solution);

/**
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_solution_objective(const CcsocSolution *solution, double *out);

/**
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_solution_converged(const CcsocSolution *solution, bool *out);

/**
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_solution_iterations(const CcsocSolution *solution, size_t *out);

/**
 * Copies vehicle `vehicle`'s stacked controls into `buffer`, which must
 * hold at least the control length.
 *
 * # Safety
 * `solution` must be a live handle; `buffer` must have room for `capacity`
 * doubles.
 */
CcsocStatus ccsoc_solution_controls(const CcsocSolution *solution,
                                    size_t vehicle,
                                    double *buffer,
                                    size_t capacity);

/**
 * The full solution (controls, risk, ledger, config hash) as JSON.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
CcsocStatus ccsoc_solution_to_json(const CcsocSolution *solution, char **out);

/**
 * Monte Carlo validation over `trials` fresh draws. Writes the report JSON
 * to `report` (may be NULL) and whether every group met its threshold to
 * `passed`.
 *
 * # Safety
 * Both handles must be live; `passed` must be writable.
 */
CcsocStatus ccsoc_validate(CcsocScenario *scenario,
                           const CcsocSolution *solution,
                           uint64_t trials,
                           uint64_t seed,
                           char **report,
                           bool *passed);

/**
 * Tail bound `f(λ)` for `samples` samples.
 *
 * # Safety
 * `out` must be writable.
 */
CcsocStatus ccsoc_bound_f(size_t samples, double lambda, double *out);

/**
 * Multiplier `λ` with `f(λ) = omega`.
 *
 * # Safety
 * `out` must be writable.
 */
CcsocStatus ccsoc_bound_lambda(size_t samples, double omega, double *out);

/**
 * Smallest multiplier from which `f` is convex.
 *
 * # Safety
 * `out` must be writable.
 */
CcsocStatus ccsoc_bound_theta(size_t samples, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCSOC_H */
