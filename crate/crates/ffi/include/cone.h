#ifndef CONE_H
#define CONE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  CONE_STATUS_OK = 0,
  CONE_STATUS_NULL_POINTER = 1,
  CONE_STATUS_INVALID_UTF8 = 2,
  CONE_STATUS_INVALID_JSON = 3,
  CONE_STATUS_INVALID_CONFIG = 4,
  CONE_STATUS_INVALID_EVENT = 5,
  CONE_STATUS_INVALID_ARGUMENT = 6,
  CONE_STATUS_SEQUENCING = 7,
  CONE_STATUS_NOT_FOUND = 8,
  CONE_STATUS_INVALID_TRANSITION = 9,
  CONE_STATUS_STATISTICS = 10,
  CONE_STATUS_IO = 11,
  CONE_STATUS_PANIC = 12,
} ConeStatus;

/**
 * Source of "now" for an engine.
 */
typedef enum {
  /**
   * Each event's own timestamp; suited to replaying logs.
   */
  CONE_CLOCK_EVENT_TIME = 0,
  /**
   * The wall clock.
   */
  CONE_CLOCK_WALL = 1,
} ConeClock;

/**
 * Parsed repository configuration.
 */
typedef struct ConeConfig ConeConfig;

/**
 * A detection engine holding any number of repositories.
 */
typedef struct ConeEngine ConeEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cone_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void cone_string_free(char *s);

/**
 * Default configuration. Never null.
 */
ConeConfig *cone_config_default(void);

/**
 * Parses a JSON configuration document; missing keys take defaults.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
ConeStatus cone_config_parse(const char *text, ConeConfig **out);

/**
 * Serializes a configuration with every key present.
 *
 * # Safety
 * `config` must be a live handle and `out` writable.
 */
ConeStatus cone_config_to_json(const ConeConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void cone_config_free(ConeConfig *config);

/**
 * Creates an engine. With a null `state_dir` all state stays in memory;
 * otherwise it is persisted under that directory and restored from it.
 *
 * # Safety
 * `config` must be a live handle, `state_dir` null or NUL-terminated, and
 * `out` writable.
 */
ConeStatus cone_engine_new(const ConeConfig *config,
                           const char *state_dir,
                           ConeClock clock,
                           ConeEngine **out);

/**
 * # Safety
 * `engine` must be null or a handle not yet freed.
 */
void cone_engine_free(ConeEngine *engine);

/**
 * Ingests one pull-request event given as JSON. On success `*out` receives
 * a JSON array of the notifications this event produced.
 *
 * # Safety
 * `engine` must be a live handle, `event_json` NUL-terminated, `out` writable.
 */
ConeStatus cone_engine_ingest_json(const ConeEngine *engine, const char *event_json, char **out);

/**
 * Sets the feedback state (`active`, `resolved` or `wont_fix`) of a
 * notification. On success `*out` receives the updated notification as JSON.
 *
 * # Safety
 * `engine` must be a live handle, strings NUL-terminated, `out` writable.
 */
ConeStatus cone_engine_record_feedback(const ConeEngine *engine,
                                       const char *notification_id,
                                       const char *verdict,
                                       char **out);

/**
 * Counts a click on `pr_link`, `file_link` or `author_link`; `*out_count`
 * receives the new counter value.
 *
 * # Safety
 * `engine` must be a live handle, strings NUL-terminated, `out_count` writable.
 */
ConeStatus cone_engine_record_interaction(const ConeEngine *engine,
                                          const char *notification_id,
                                          const char *element,
                                          uint64_t *out_count);

/**
 * Notifications of a repository as a JSON array, oldest first. A non-null
 * `since` (RFC 3339) keeps only those created at or after it.
 *
 * # Safety
 * `engine` must be a live handle, strings null or NUL-terminated as
 * documented, `out` writable.
 */
ConeStatus cone_engine_notifications_json(const ConeEngine *engine,
                                          const char *repo_id,
                                          const char *since,
                                          char **out);

/**
 * Telemetry of a repository as a JSON object.
 *
 * # Safety
 * `engine` must be a live handle, `repo_id` NUL-terminated, `out` writable.
 */
ConeStatus cone_engine_telemetry_json(const ConeEngine *engine, const char *repo_id, char **out);

/**
 * Writes a snapshot of every repository. A no-op for in-memory engines.
 *
 * # Safety
 * `engine` must be a live handle.
 */
ConeStatus cone_engine_snapshot(const ConeEngine *engine);

/**
 * Spearman's rho of two length-`len` arrays, ties given average ranks.
 *
 * # Safety
 * `xs` and `ys` must point to `len` readable doubles; `out` writable.
 */
ConeStatus cone_spearman_rho(const double *xs, const double *ys, size_t len, double *out);

/**
 * Two-sided permutation p-value for Spearman's rho.
 *
 * # Safety
 * `xs` and `ys` must point to `len` readable doubles; `out` writable.
 */
ConeStatus cone_permutation_p_value(const double *xs,
                                    const double *ys,
                                    size_t len,
                                    size_t iterations,
                                    uint64_t seed,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONE_H */
