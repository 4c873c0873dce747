/* C API of the DLO placement toolkit.
 *
 * Conventions:
 * - An opaque DloToolkit handle carries the configuration and the last
 *   error message.
 * - Every fallible call returns a DloStatus; on failure the message is
 *   retrievable with dlo_last_error until the next call on the same
 *   handle.
 * - Structured inputs and outputs are UTF-8 JSON / CSV strings in the
 *   same formats as the dloplace CLI. Returned strings must be released
 *   with dlo_string_free.
 *
 * This header is maintained by hand and kept in lock-step with the
 * Rust implementation by a consistency test.
 */

#ifndef DLO_PLACEMENT_H
#define DLO_PLACEMENT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes of every fallible call. */
typedef enum DloStatus {
  /* Success. */
  DLO_OK = 0,
  /* Invalid argument: null pointer, bad UTF-8, malformed input, or a
   * validation failure. */
  DLO_INVALID_ARGUMENT = 1,
  /* Domain failure: planning, fitting, or simulation did not succeed. */
  DLO_DOMAIN_FAILURE = 2,
  /* Internal panic; the handle is still usable. */
  DLO_PANIC = 3,
} DloStatus;

/* Opaque toolkit handle. */
typedef struct DloToolkit DloToolkit;

/* Create a toolkit from a configuration JSON document (the dloplace
 * config schema). On success writes the handle to out. */
DloStatus dlo_toolkit_new(const char *config_json, DloToolkit **out);

/* Release a toolkit handle. Null is a no-op. */
void dlo_toolkit_free(DloToolkit *tk);

/* Last error message of the handle; empty string when the previous call
 * succeeded. Valid until the next call on the same handle. */
const char *dlo_last_error(const DloToolkit *tk);

/* Evaluate a free elastica shape and return it as shape CSV
 * ("# {json}" header plus "s,x,y,phi,kappa" rows). */
DloStatus dlo_eval_shape(DloToolkit *tk, double x, double y, double phi,
                         double k, double s0, double ltilde, size_t samples,
                         char **out_csv);

/* Plan a full three-stage placement from a start state JSON
 * ({"base": {...}, "params": {...}}); returns the plan JSON. */
DloStatus dlo_plan(DloToolkit *tk, const char *start_json,
                   char **out_plan_json);

/* Fit elastica parameters to an observed points CSV (JSON header line
 * with base pose and L); returns the candidate set JSON. */
DloStatus dlo_fit(DloToolkit *tk, const char *points_csv, size_t starts,
                  char **out_candidates_json);

/* Run the closed-loop simulation over a plan JSON; returns the summary
 * JSON. A run that does not complete reports DLO_DOMAIN_FAILURE. */
DloStatus dlo_simulate(DloToolkit *tk, const char *plan_json,
                       char **out_summary_json);

/* Release a string returned by this library. Null is a no-op. */
void dlo_string_free(char *s);

/* Library version as a static string; never freed by the caller. */
const char *dlo_version(void);

#ifdef __cplusplus
}
#endif

#endif /* DLO_PLACEMENT_H */
