#ifndef SACFEM_H
#define SACFEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SacfemStatus {
  SACFEM_STATUS_OK = 0,
  SACFEM_STATUS_NULL_ARGUMENT = 1,
  SACFEM_STATUS_INVALID_UTF8 = 2,
  SACFEM_STATUS_CONFIG = 3,
  SACFEM_STATUS_STUDY = 4,
  SACFEM_STATUS_OUT_OF_RANGE = 5,
  SACFEM_STATUS_PANIC = 6,
} SacfemStatus;

/**
 * Parsed and validated study configuration.
 */
typedef struct SacfemConfig SacfemConfig;

/**
 * Reports produced by one study run.
 */
typedef struct SacfemStudy SacfemStudy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *sacfem_last_error(void);

/**
 * Library version as a static string.
 */
const char *sacfem_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void sacfem_string_free(char *s);

/**
 * Parse a TOML study config.
 *
 * # Safety
 * `text` must be a nul-terminated string; `out` must be a valid pointer.
 */
enum SacfemStatus sacfem_config_parse(const char *text, struct SacfemConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from [`sacfem_config_parse`], not yet freed.
 */
void sacfem_config_free(struct SacfemConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum SacfemStatus sacfem_config_set_seed(struct SacfemConfig *cfg, uint64_t seed);

/**
 * Short hex hash identifying the config.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be a valid pointer.
 */
enum SacfemStatus sacfem_config_hash(const struct SacfemConfig *cfg, char **out);

/**
 * Run the configured study on `workers` threads (0: one per core).
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be a valid pointer.
 */
enum SacfemStatus sacfem_study_run(const struct SacfemConfig *cfg,
                                   uint32_t workers,
                                   struct SacfemStudy **out);

/**
 * # Safety
 * `study` must be null or a handle from [`sacfem_study_run`], not yet freed.
 */
void sacfem_study_free(struct SacfemStudy *study);

/**
 * Number of rate reports in the study.
 *
 * # Safety
 * `study` must be a live study handle; `out` must be a valid pointer.
 */
enum SacfemStatus sacfem_study_report_count(const struct SacfemStudy *study, size_t *out);

/**
 * Fitted slope of report `index`; `NaN` when no fit was possible.
 *
 * # Safety
 * `study` must be a live study handle; `out` must be a valid pointer.
 */
enum SacfemStatus sacfem_study_slope(const struct SacfemStudy *study, size_t index, double *out);

/**
 * CSV text of report `index`.
 *
 * # Safety
 * `study` must be a live study handle; `out` must be a valid pointer.
 */
enum SacfemStatus sacfem_study_csv(const struct SacfemStudy *study, size_t index, char **out);

/**
 * JSON summary of report `index`, stamped with the caller's runtime.
 *
 * # Safety
 * `study` must be a live study handle; `out` must be a valid pointer.
 */
enum SacfemStatus sacfem_study_json(const struct SacfemStudy *study,
                                    size_t index,
                                    double runtime_seconds,
                                    char **out);

/**
 * Run the built-in checks; `failed` receives the number of failures.
 *
 * # Safety
 * `failed` must be a valid pointer.
 */
enum SacfemStatus sacfem_selftest(uint32_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SACFEM_H */
