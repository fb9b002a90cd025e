/* spansim C API - deterministic multi-tenant cluster simulator. */

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible entry point.
 */
typedef enum SpansimStatus {
  SpansimOk = 0,
  SpansimNullArgument = 1,
  SpansimInvalidUtf8 = 2,
  SpansimIoError = 3,
  SpansimParseError = 4,
  SpansimInvalidScenario = 5,
  SpansimRuntimeError = 6,
} SpansimStatus;

/**
 * Scalar counters readable from a report.
 */
typedef enum SpansimCounter {
  SpansimCounterArrivals = 0,
  SpansimCounterCompleted = 1,
  SpansimCounterRunningAtHorizon = 2,
  SpansimCounterPendingAtHorizon = 3,
  SpansimCounterFailedAtHorizon = 4,
  SpansimCounterPreemptionEvents = 5,
  SpansimCounterPreemptionVictims = 6,
  SpansimCounterOutagePodFailures = 7,
  SpansimCounterReplicaAdditions = 8,
  SpansimCounterObjectCount = 9,
  SpansimCounterMaxUnavailableObjects = 10,
} SpansimCounter;

/**
 * Opaque: the metrics of one finished run.
 */
typedef struct SpansimReport SpansimReport;

/**
 * Opaque: a loaded scenario plus pending overrides.
 */
typedef struct SpansimScenario SpansimScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next spansim call on the same thread.
 */
const char *spansim_last_error_message(void);

/**
 * Library version as a static string; never freed.
 */
const char *spansim_version(void);

/**
 * Load a scenario from a JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to receive the handle. The handle is released with
 * `spansim_scenario_free`.
 */
enum SpansimStatus spansim_scenario_load_file(const char *path, struct SpansimScenario **out);

/**
 * Load a scenario from JSON text. Relative `trace_file` paths resolve
 * against the process working directory.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to receive the handle.
 */
enum SpansimStatus spansim_scenario_from_json(const char *json, struct SpansimScenario **out);

/**
 * Validate the scenario; `out_json` receives a JSON array of diagnostics
 * (empty array means clean), freed with `spansim_string_free`.
 *
 * # Safety
 * `scenario` must be a live handle from a load call; `out_json` must be a
 * valid pointer.
 */
enum SpansimStatus spansim_scenario_validate(const struct SpansimScenario *scenario,
                                             char **out_json);

/**
 * Override the workload generator seed for subsequent runs.
 *
 * # Safety
 * `scenario` must be a live handle from a load call.
 */
enum SpansimStatus spansim_scenario_set_seed(struct SpansimScenario *scenario, uint64_t seed);

/**
 * Apply one policy override, e.g. key "backfill", value "on". Keys:
 * ordering, quotas, reservations, backfill, halflife.
 *
 * # Safety
 * `scenario` must be a live handle; `key` and `value` must be valid
 * NUL-terminated strings.
 */
enum SpansimStatus spansim_scenario_set_policy(struct SpansimScenario *scenario,
                                               const char *key,
                                               const char *value);

/**
 * # Safety
 * `scenario` must be a handle from a load call, not yet freed; null is a
 * no-op.
 */
void spansim_scenario_free(struct SpansimScenario *scenario);

/**
 * Run the scenario to its horizon. On success `out` receives a report
 * handle, released with `spansim_report_free`.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be a valid pointer.
 */
enum SpansimStatus spansim_run(const struct SpansimScenario *scenario, struct SpansimReport **out);

/**
 * GPU utilization over the whole run, or -1 on a null handle.
 *
 * # Safety
 * `report` must be a live handle from `spansim_run` or null.
 */
double spansim_report_gpu_utilization(const struct SpansimReport *report);

/**
 * CPU utilization over the whole run, or -1 on a null handle.
 *
 * # Safety
 * `report` must be a live handle from `spansim_run` or null.
 */
double spansim_report_cpu_utilization(const struct SpansimReport *report);

/**
 * GPU-hours for one namespace, or for the whole cluster when `namespace`
 * is null.
 *
 * # Safety
 * `report` must be a live handle; `namespace` may be null; `out` must be a
 * valid pointer.
 */
enum SpansimStatus spansim_report_gpu_hours(const struct SpansimReport *report,
                                            const char *namespace_,
                                            double *out);

/**
 * Read one scalar counter; `u64::MAX` flags a null handle.
 *
 * # Safety
 * `report` must be a live handle from `spansim_run` or null.
 */
uint64_t spansim_report_counter(const struct SpansimReport *report, enum SpansimCounter counter);

/**
 * Whole report as a JSON document; freed with `spansim_string_free`.
 *
 * # Safety
 * `report` must be a live handle; `out_json` must be a valid pointer.
 */
enum SpansimStatus spansim_report_summary_json(const struct SpansimReport *report, char **out_json);

/**
 * # Safety
 * `report` must be a handle from `spansim_run`, not yet freed; null is a
 * no-op.
 */
void spansim_report_free(struct SpansimReport *report);

/**
 * Release a string returned through an out-param.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library and not yet
 * freed; null is a no-op.
 */
void spansim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
