#ifndef ADCONS_H
#define ADCONS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdconsStatus {
  ADCONS_STATUS_OK = 0,
  ADCONS_STATUS_NULL_POINTER = 1,
  ADCONS_STATUS_INVALID_ARGUMENT = 2,
  ADCONS_STATUS_DIMENSION_MISMATCH = 3,
  ADCONS_STATUS_NO_STABILIZING_SOLUTION = 4,
  ADCONS_STATUS_NO_FEASIBLE_GAMMA = 5,
  ADCONS_STATUS_NOT_POSITIVE_DEFINITE = 6,
  ADCONS_STATUS_DIVERGENCE = 7,
  ADCONS_STATUS_PARSE_ERROR = 8,
  ADCONS_STATUS_IO_ERROR = 9,
  ADCONS_STATUS_VALIDATION_ERROR = 10,
  ADCONS_STATUS_BUFFER_TOO_SMALL = 11,
  ADCONS_STATUS_PANIC = 12,
} AdconsStatus;

/*
 Synthesized gains and certificate.
 */
typedef struct AdconsGains AdconsGains;

/*
 A validated scenario.
 */
typedef struct AdconsScenario AdconsScenario;

/*
 A simulated (or imported) trace.
 */
typedef struct AdconsTrace AdconsTrace;

/*
 Cost summary of a trace.
 */
typedef struct AdconsCostReport {
  double jx_final;
  double j_star_initial;
  double j_star_integral;
  double j_star;
  double tail_estimate;
  double horizon;
  /*
   1 when `jx_final <= j_star`.
   */
  int satisfied;
  double margin;
} AdconsCostReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len`). Returns the full message length including the NUL,
 or 0 when there is no error.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t adcons_last_error_message(char *buf, size_t len);

/*
 Linear design at a fixed γ. `a` is d×d, `b` d×p, `q` d×d.

 # Safety
 Matrix pointers must reference the stated number of doubles; `out` must
 be writable.
 */
enum AdconsStatus adcons_synthesize_linear(const double *a,
                                           const double *b,
                                           size_t d,
                                           size_t p,
                                           const double *q,
                                           double gamma,
                                           struct AdconsGains **out);

/*
 Lipschitz design at a fixed γ with Lipschitz constant `mu`.

 # Safety
 See [`adcons_synthesize_linear`].
 */
enum AdconsStatus adcons_synthesize_lipschitz(const double *a,
                                              const double *b,
                                              size_t d,
                                              size_t p,
                                              const double *q,
                                              double gamma,
                                              double mu,
                                              struct AdconsGains **out);

/*
 Gain-factor design: searches γ so that the certificate is bounded by
 `eps`. A negative `mu` selects the linear design.

 # Safety
 See [`adcons_synthesize_linear`].
 */
enum AdconsStatus adcons_synthesize_eps(const double *a,
                                        const double *b,
                                        size_t d,
                                        size_t p,
                                        const double *q,
                                        double eps,
                                        double mu,
                                        struct AdconsGains **out);

/*
 State dimension `d` and input dimension `p` of the gains.

 # Safety
 `gains` must come from this library; `d` and `p` must be writable.
 */
enum AdconsStatus adcons_gains_dims(const struct AdconsGains *gains, size_t *d, size_t *p);

/*
 γ used for the gains (the searched value for gain-factor designs).

 # Safety
 `gains` must come from this library; `gamma` must be writable.
 */
enum AdconsStatus adcons_gains_gamma(const struct AdconsGains *gains, double *gamma);

/*
 Copies K_u (p×d, row-major) into `buf`.

 # Safety
 `buf` must have room for `len` doubles.
 */
enum AdconsStatus adcons_gains_ku(const struct AdconsGains *gains, double *buf, size_t len);

/*
 Copies K_w (d×d) into `buf`.

 # Safety
 `buf` must have room for `len` doubles.
 */
enum AdconsStatus adcons_gains_kw(const struct AdconsGains *gains, double *buf, size_t len);

/*
 Copies the Riccati certificate (d×d) into `buf`.

 # Safety
 `buf` must have room for `len` doubles.
 */
enum AdconsStatus adcons_gains_certificate(const struct AdconsGains *gains,
                                           double *buf,
                                           size_t len);

/*
 # Safety
 `gains` must be null or come from this library, and not be used again.
 */
void adcons_gains_free(struct AdconsGains *gains);

/*
 Loads and validates a scenario file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AdconsStatus adcons_scenario_load(const char *path, struct AdconsScenario **out);

/*
 Loads a bundled scenario (`"example1"` or `"example2"`).

 # Safety
 `name` must be a NUL-terminated string; `out` must be writable.
 */
enum AdconsStatus adcons_scenario_bundled(const char *name, struct AdconsScenario **out);

/*
 Number of agents and state dimension of a scenario.

 # Safety
 `sc` must come from this library; `agents` and `d` must be writable.
 */
enum AdconsStatus adcons_scenario_dims(const struct AdconsScenario *sc, size_t *agents, size_t *d);

/*
 Synthesizes the scenario's gains.

 # Safety
 `sc` must come from this library; `out` must be writable.
 */
enum AdconsStatus adcons_scenario_synthesize(const struct AdconsScenario *sc,
                                             struct AdconsGains **out);

/*
 Synthesizes gains and simulates the scenario.

 # Safety
 `sc` must come from this library; `out` must be writable.
 */
enum AdconsStatus adcons_scenario_simulate(const struct AdconsScenario *sc,
                                           struct AdconsTrace **out);

/*
 Simulates the scenario with caller-supplied gains.

 # Safety
 `sc` and `gains` must come from this library; `out` must be writable.
 */
enum AdconsStatus adcons_scenario_simulate_with(const struct AdconsScenario *sc,
                                                const struct AdconsGains *gains,
                                                struct AdconsTrace **out);

/*
 # Safety
 `sc` must be null or come from this library, and not be used again.
 */
void adcons_scenario_free(struct AdconsScenario *sc);

/*
 Number of samples in the trace.

 # Safety
 `trace` must come from this library; `count` must be writable.
 */
enum AdconsStatus adcons_trace_sample_count(const struct AdconsTrace *trace, size_t *count);

/*
 Disagreement norm at the last sample.

 # Safety
 `trace` must come from this library; `value` must be writable.
 */
enum AdconsStatus adcons_trace_final_disagreement(const struct AdconsTrace *trace, double *value);

/*
 Cost functional and guaranteed-cost bound for the trace.

 # Safety
 `trace` must come from this library; `report` must be writable.
 */
enum AdconsStatus adcons_trace_cost_report(const struct AdconsTrace *trace,
                                           struct AdconsCostReport *report);

/*
 Writes the trace CSV and its `.meta` sibling.

 # Safety
 `trace` must come from this library; `path` must be a NUL-terminated string.
 */
enum AdconsStatus adcons_trace_export(const struct AdconsTrace *trace, const char *path);

/*
 Reads a trace written by [`adcons_trace_export`].

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AdconsStatus adcons_trace_import(const char *path, struct AdconsTrace **out);

/*
 # Safety
 `trace` must be null or come from this library, and not be used again.
 */
void adcons_trace_free(struct AdconsTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADCONS_H */
