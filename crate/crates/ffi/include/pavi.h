#ifndef PAVI_H
#define PAVI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Output dimension of the built-in encoder.
 */
#define PAVI_BUILTIN_DIM 256

typedef enum PaviStatus {
  PAVI_STATUS_OK = 0,
  PAVI_STATUS_NULL_ARGUMENT = 1,
  PAVI_STATUS_INVALID_UTF8 = 2,
  PAVI_STATUS_CONFIG = 3,
  PAVI_STATUS_INPUT = 4,
  PAVI_STATUS_STAGE = 5,
  PAVI_STATUS_BUFFER_SIZE = 6,
  PAVI_STATUS_PANIC = 7,
} PaviStatus;

typedef struct PaviPipeline PaviPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version; static storage, never freed.
 */
const char *pavi_version(void);

/**
 * Message of the last failure on this thread, or null. Owned by the library.
 */
const char *pavi_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer returned by this library and not yet freed.
 */
void pavi_string_free(char *s);

/**
 * Loads a pipeline configuration file and builds both indexes in memory.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out` must be valid for one write.
 */
enum PaviStatus pavi_pipeline_open(const char *config_path, struct PaviPipeline **out);

/**
 * Releases a pipeline. Null is ignored.
 *
 * # Safety
 * `pipeline` must be null or a handle from `pavi_pipeline_open` not yet freed.
 */
void pavi_pipeline_free(struct PaviPipeline *pipeline);

/**
 * Predicts one product given as a corpus JSON record. Writes
 * `{"product_id", "predictions", "trace"}` to `out`.
 *
 * # Safety
 * Pointers must be valid as described in the module conventions.
 */
enum PaviStatus pavi_pipeline_predict_json(const struct PaviPipeline *pipeline,
                                           const char *product_json,
                                           size_t k,
                                           size_t m,
                                           char **out);

/**
 * Assembles the prompt for one product without calling the generator.
 *
 * # Safety
 * Pointers must be valid as described in the module conventions.
 */
enum PaviStatus pavi_pipeline_prompt(const struct PaviPipeline *pipeline,
                                     const char *product_json,
                                     size_t k,
                                     size_t m,
                                     char **out);

/**
 * Parses a raw completion against a category's attribute schema. Writes
 * `{"predictions", "diagnostics"}` to `out`.
 *
 * # Safety
 * Pointers must be valid as described in the module conventions.
 */
enum PaviStatus pavi_pipeline_parse_completion(const struct PaviPipeline *pipeline,
                                               const char *category,
                                               const char *completion,
                                               char **out);

/**
 * Encodes `text` with the built-in encoder into `out[0..len]`; `len` must
 * equal `PAVI_BUILTIN_DIM`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be valid for `len` writes.
 */
enum PaviStatus pavi_encode_builtin(const char *text, double *out, size_t len);

/**
 * Scores a JSON array of evaluation instances
 * (`{product_id, attribute, ground_truth, outcome, candidates?}`) and
 * writes the report to `out`.
 *
 * # Safety
 * Pointers must be valid as described in the module conventions.
 */
enum PaviStatus pavi_micro_scores_json(const char *instances_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAVI_H */
