#ifndef PREEMPT_H
#define PREEMPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Which solver [`pp_solve`] runs.
typedef enum PpSolver {
  PP_SOLVER_GIBBS = 0,
  PP_SOLVER_EXACT = 1,
  PP_SOLVER_MIN_CONN = 2,
  PP_SOLVER_MIN_BW = 3,
} PpSolver;

// Status codes returned by every fallible call.
typedef enum PpStatus {
  PP_STATUS_OK = 0,
  PP_STATUS_NULL_ARGUMENT = 1,
  PP_STATUS_INVALID_UTF8 = 2,
  PP_STATUS_PARSE = 3,
  PP_STATUS_INVALID_ARGUMENT = 4,
  PP_STATUS_TOO_LARGE = 5,
  PP_STATUS_PANIC = 6,
} PpStatus;

// A validated preemption instance.
typedef struct PpInstance PpInstance;

// The outcome of one solver run.
typedef struct PpResult PpResult;

// Sampler settings for [`PpSolver::Gibbs`]; ignored by other solvers.
typedef struct PpGibbsOptions {
  size_t nd;
  uint64_t seed;
  size_t max_sweeps;
  double t0;
  bool repair;
} PpGibbsOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next `pp_*` call on the same thread.
const char *pp_last_error(void);

// Default sampler options (`nd = 1`, seed 0).
struct PpGibbsOptions pp_gibbs_options_default(void);

// Parses an instance from its JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum PpStatus pp_instance_from_json(const char *json, struct PpInstance **out);

// # Safety
// `inst` must come from [`pp_instance_from_json`] and not be freed yet.
void pp_instance_free(struct PpInstance *inst);

// Number of links on the route, 0 for a null handle.
//
// # Safety
// `inst` must be null or a live instance handle.
size_t pp_instance_links(const struct PpInstance *inst);

// # Safety
// `inst` must be null or a live instance handle.
size_t pp_instance_flow_count(const struct PpInstance *inst);

// Total number of (flow, link) decisions, the length
// [`pp_hamiltonian`] expects.
//
// # Safety
// `inst` must be null or a live instance handle.
size_t pp_instance_incidences(const struct PpInstance *inst);

// Exact energy of a decision matrix given flow by flow, each flow's
// links in route order, nonzero bytes meaning "preempt".
//
// # Safety
// `inst` must be live, `decisions` must point to `len` bytes and `out`
// must be valid.
enum PpStatus pp_hamiltonian(const struct PpInstance *inst,
                             const uint8_t *decisions,
                             size_t len,
                             double *out);

// Runs a solver. `options` may be null for defaults.
//
// # Safety
// `inst` must be live, `options` null or valid, and `out` valid.
enum PpStatus pp_solve(const struct PpInstance *inst,
                       enum PpSolver solver,
                       const struct PpGibbsOptions *options,
                       struct PpResult **out);

// # Safety
// `res` must come from [`pp_solve`] and not be freed yet.
void pp_result_free(struct PpResult *res);

// Weighted preempted bandwidth; NaN for a null handle.
//
// # Safety
// `res` must be null or a live result handle.
double pp_result_cost(const struct PpResult *res);

// # Safety
// `res` must be null or a live result handle.
bool pp_result_feasible(const struct PpResult *res);

// # Safety
// `res` must be null or a live result handle.
uint64_t pp_result_messages(const struct PpResult *res);

// Copies up to `cap` preempted flow ids (ascending) into `ids` and returns
// how many there are in total. Call with `cap = 0` to size the buffer.
//
// # Safety
// `res` must be null or live; `ids` must have room for `cap` entries.
size_t pp_result_preempted(const struct PpResult *res, size_t *ids, size_t cap);

// The full result, trace included, as a JSON string to release with
// [`pp_string_free`]. Null on failure.
//
// # Safety
// `res` must be null or a live result handle.
char *pp_result_to_json(const struct PpResult *res);

// # Safety
// `s` must come from [`pp_result_to_json`] and not be freed yet.
void pp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREEMPT_H */
