#ifndef MCFSIM_H
#define MCFSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum McfStatus {
  MCF_STATUS_OK = 0,
  MCF_STATUS_NULL_ARGUMENT = 1,
  MCF_STATUS_INVALID_UTF8 = 2,
  MCF_STATUS_INVALID_SCENARIO = 3,
  MCF_STATUS_UNKNOWN_NAME = 4,
  MCF_STATUS_RUNTIME_FAILURE = 5,
  MCF_STATUS_UNKNOWN_METRIC = 6,
  MCF_STATUS_METRIC_ABSENT = 7,
  MCF_STATUS_SCENARIO_MISMATCH = 8,
  MCF_STATUS_INTERNAL_PANIC = 9,
} McfStatus;

// The canonical report of one run.
typedef struct McfReport McfReport;

// A resolved, validated scenario.
typedef struct McfScenario McfScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *mcf_last_error(void);

// Library version as a static NUL-terminated string.
const char *mcf_version(void);

// Parse a scenario document.
//
// # Safety
// `toml` is a NUL-terminated string; `out` is a valid pointer.
enum McfStatus mcf_scenario_from_toml(const char *toml, struct McfScenario **out);

// Look up a built-in scenario by name.
//
// # Safety
// `name` is a NUL-terminated string; `out` is a valid pointer.
enum McfStatus mcf_scenario_builtin(const char *name, struct McfScenario **out);

// Override the root seed.
//
// # Safety
// `scenario` is null or a live handle.
enum McfStatus mcf_scenario_set_seed(struct McfScenario *scenario, uint64_t seed);

// Release a scenario. Null is ignored.
//
// # Safety
// `scenario` is null or a handle not yet freed.
void mcf_scenario_free(struct McfScenario *scenario);

// Simulate a scenario to completion. The scenario is left untouched.
//
// # Safety
// `scenario` is a live handle; `out` is a valid pointer.
enum McfStatus mcf_run(const struct McfScenario *scenario, struct McfReport **out);

// Canonical JSON of a report, owned by the report.
//
// # Safety
// `report` is null or a live handle.
const char *mcf_report_json(const struct McfReport *report);

// Read one headline metric, e.g. `latency`, `throughput`, `cpu` or `recovery`.
//
// # Safety
// `report` is a live handle; `metric` a NUL-terminated string; `out` valid.
enum McfStatus mcf_report_metric(const struct McfReport *report, const char *metric, double *out);

// Check an ordering assertion such as `latency:A<B` between two reports of
// the same family. `holds` receives 1 or 0.
//
// # Safety
// `a` and `b` are live handles; `assertion` a NUL-terminated string; `holds` valid.
enum McfStatus mcf_compare(const struct McfReport *a,
                           const struct McfReport *b,
                           const char *assertion,
                           int32_t *holds);

// Release a report. Null is ignored.
//
// # Safety
// `report` is null or a handle not yet freed.
void mcf_report_free(struct McfReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCFSIM_H */
