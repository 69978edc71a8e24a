/* Copyright 2026 the migratekit Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef MIGRATEKIT_H
#define MIGRATEKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MkStatus {
  MK_STATUS_OK = 0,
  MK_STATUS_NULL_ARGUMENT = 1,
  MK_STATUS_INVALID_UTF8 = 2,
  MK_STATUS_SCHEMA = 3,
  MK_STATUS_CONFIG = 4,
  MK_STATUS_DRIVER = 5,
  MK_STATUS_LLM = 6,
  MK_STATUS_REJECTED = 7,
  MK_STATUS_PANIC = 8,
} MkStatus;

// An LLM gateway (HTTP, scripted or replay backend).
typedef struct MkGateway MkGateway;

// A simulated app instance.
typedef struct MkSimDevice MkSimDevice;

// Rates as fractions in [0, 1]. `success_defined` is false when every
// case was undetermined and `success_rate` carries no information.
typedef struct MkRates {
  double executable_rate;
  double perfect_rate;
  double success_rate;
  bool success_defined;
} MkRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *mk_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library and not yet freed.
void mk_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *mk_version(void);

// Extracts the individual test logic of a test-case JSON document and
// writes the logic document (header plus numbered steps).
//
// # Safety
// `case_json` must be a NUL-terminated string; `out_logic` a valid pointer.
enum MkStatus mk_extract_logic(const char *case_json, char **out_logic);

// Parses one template line into its JSON form.
//
// # Safety
// `line` must be a NUL-terminated string; `out_json` a valid pointer.
enum MkStatus mk_parse_logic_step(const char *line, char **out_json);

// Renders the JSON form of a logic step as one template line.
//
// # Safety
// `step_json` must be a NUL-terminated string; `out_line` a valid pointer.
enum MkStatus mk_render_logic_step(const char *step_json, char **out_line);

// Executable, perfect and success rates for a run's counts.
//
// # Safety
// `out` must point to writable memory for one `MkRates`.
enum MkStatus mk_compute_rates(uint64_t total,
                               uint64_t executable,
                               uint64_t perfect,
                               uint64_t successful,
                               uint64_t undetermined,
                               struct MkRates *out);

// Fraction of ground-truth coverage units also covered by the generated
// tests. Both sets use the coverage file format (one unit per line).
//
// # Safety
// Both strings must be NUL-terminated; `out` must be a valid pointer.
enum MkStatus mk_coverage_capability(const char *generated, const char *ground_truth, double *out);

// Opens a simulator for a bundled app name or a sim-app JSON document.
//
// # Safety
// `name_or_json` must be NUL-terminated; `out` a valid pointer. Release
// the handle with `mk_sim_free`.
enum MkStatus mk_sim_open(const char *name_or_json, struct MkSimDevice **out);

// # Safety
// `dev` must be NULL or a handle from `mk_sim_open` not yet freed.
void mk_sim_free(struct MkSimDevice *dev);

// Resets the app and writes the initial GUI state as JSON.
//
// # Safety
// `dev` must be a live handle; `out_state_json` a valid pointer.
enum MkStatus mk_sim_reset(struct MkSimDevice *dev, char **out_state_json);

// Writes the current GUI state as JSON without changing it.
//
// # Safety
// `dev` must be a live handle; `out_state_json` a valid pointer.
enum MkStatus mk_sim_observe(struct MkSimDevice *dev, char **out_state_json);

// Performs `action` (click, edit, swipe, scroll, long-press) on a widget
// of the current state. `value` may be NULL. A refused event returns
// `MK_STATUS_REJECTED` and leaves the state unchanged.
//
// # Safety
// `dev` must be a live handle; strings NUL-terminated or NULL where
// allowed; `out_state_json` a valid pointer.
enum MkStatus mk_sim_execute(struct MkSimDevice *dev,
                             const char *widget_id,
                             const char *action,
                             const char *value,
                             char **out_state_json);

// A gateway answering from a script: a JSON array of
// `{"match": <substring>, "respond": <text>}` entries.
//
// # Safety
// `script_json` must be NUL-terminated; `out` a valid pointer.
enum MkStatus mk_gateway_scripted(const char *script_json, struct MkGateway **out);

// A gateway replaying a recorded transcript file.
//
// # Safety
// `transcript_path` must be NUL-terminated; `out` a valid pointer.
enum MkStatus mk_gateway_replay(const char *transcript_path, struct MkGateway **out);

// A gateway for an OpenAI-compatible endpoint. The API key is read from
// the `MIGRATEKIT_API_KEY` environment variable.
//
// # Safety
// `endpoint` and `model` must be NUL-terminated; `out` a valid pointer.
enum MkStatus mk_gateway_http(const char *endpoint,
                              const char *model,
                              double temperature,
                              struct MkGateway **out);

// # Safety
// `gw` must be NULL or a handle from an `mk_gateway_*` constructor not yet freed.
void mk_gateway_free(struct MkGateway *gw);

// Generates a test case for the simulated app from a general test logic
// document. `privileged_json` may be NULL for an empty privileged set;
// `max_selection` 0 selects the default. `out_trace_json` may be NULL.
//
// # Safety
// Handles must be live; strings NUL-terminated or NULL where allowed;
// `out_case_json` a valid pointer.
enum MkStatus mk_concretize(struct MkGateway *gw,
                            struct MkSimDevice *dev,
                            const char *general_logic,
                            const char *privileged_json,
                            uint32_t max_selection,
                            char **out_case_json,
                            char **out_trace_json);

// Replays a test case from reset and writes the execution report.
//
// # Safety
// `dev` must be a live handle; `case_json` NUL-terminated;
// `out_report_json` a valid pointer.
enum MkStatus mk_run_test(struct MkSimDevice *dev, const char *case_json, char **out_report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIGRATEKIT_H */
