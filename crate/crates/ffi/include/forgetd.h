#ifndef FORGETD_H
#define FORGETD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FgStatus {
  FG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FG_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  FG_STATUS_INVALID_UTF8 = 2,
  /**
   * A file could not be read.
   */
  FG_STATUS_IO = 3,
  /**
   * Input content was rejected (malformed evidence, bad config, bad query).
   */
  FG_STATUS_INVALID_INPUT = 4,
  /**
   * A thing or context id is not in the graph.
   */
  FG_STATUS_UNKNOWN_THING = 5,
  /**
   * Evidence is older than the engine clock.
   */
  FG_STATUS_CLOCK_REGRESSION = 6,
  /**
   * The engine panicked. The handle should not be used again.
   */
  FG_STATUS_INTERNAL = 7,
} FgStatus;

/**
 * Opaque engine handle.
 */
typedef struct FgEngine FgEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a graph snapshot and builds an engine.
 *
 * `config_path` may be null for defaults. On success `*out` receives a new
 * handle.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum FgStatus fg_engine_new_from_snapshot(const char *snapshot_path,
                                          const char *config_path,
                                          struct FgEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must come from [`fg_engine_new_from_snapshot`] and not be used
 * afterwards.
 */
void fg_engine_free(struct FgEngine *engine);

/**
 * Applies one evidence record given as a JSON line. The engine clock
 * advances to the record's timestamp first, running any scheduled work.
 *
 * # Safety
 * `engine` must be a live handle and `line` NUL-terminated.
 */
enum FgStatus fg_engine_ingest_evidence_line(struct FgEngine *engine, const char *line);

/**
 * Engine clock: timestamp of the last ingested record, or `INT64_MIN`
 * before any evidence.
 *
 * # Safety
 * `engine` must be a live handle.
 */
int64_t fg_engine_now(const struct FgEngine *engine);

/**
 * Memory buoyancy of `thing` for `user` at `at` (epoch milliseconds).
 * A null `context` reads the global value, otherwise the value local to
 * that context.
 *
 * # Safety
 * `engine` must be a live handle, strings null or NUL-terminated and `out`
 * writable.
 */
enum FgStatus fg_engine_mb(struct FgEngine *engine,
                           const char *user,
                           const char *thing,
                           const char *context,
                           int64_t at,
                           double *out);

/**
 * Mean global buoyancy of `thing` over `n_users` users.
 *
 * # Safety
 * `users` must point to `n_users` NUL-terminated strings.
 */
enum FgStatus fg_engine_group_mb(struct FgEngine *engine,
                                 const char *const *users,
                                 size_t n_users,
                                 const char *thing,
                                 int64_t at,
                                 double *out);

/**
 * Keyword search. On success `*out_json` receives the result as JSON, to
 * be released with [`fg_string_free`].
 *
 * # Safety
 * `engine` must be a live handle, strings null or NUL-terminated and
 * `out_json` writable.
 */
enum FgStatus fg_engine_query_json(struct FgEngine *engine,
                                   const char *user,
                                   const char *keywords,
                                   double threshold,
                                   const char *context,
                                   int64_t at,
                                   char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void fg_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fg_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *fg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORGETD_H */
