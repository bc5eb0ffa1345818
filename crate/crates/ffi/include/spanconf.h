#ifndef SPANCONF_H
#define SPANCONF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpanconfAggSpanMode {
  SPANCONF_AGG_SPAN_MODE_RESCORING = 0,
  SPANCONF_AGG_SPAN_MODE_TRACE = 1,
} SpanconfAggSpanMode;

typedef enum SpanconfMethod {
  SPANCONF_METHOD_SPAN = 0,
  SPANCONF_METHOD_AGG_SPAN = 1,
  SPANCONF_METHOD_AGG_SEQ = 2,
  SPANCONF_METHOD_ADA_AGG_SEQ = 3,
} SpanconfMethod;

/**
 * Result codes. Nonzero error codes match the CLI exit codes.
 */
typedef enum SpanconfStatus {
  SPANCONF_STATUS_OK = 0,
  /**
   * Bad argument or configuration.
   */
  SPANCONF_STATUS_USAGE = 2,
  /**
   * Malformed or inconsistent data.
   */
  SPANCONF_STATUS_DATA = 3,
  /**
   * Enumeration or beam capacity exceeded.
   */
  SPANCONF_STATUS_CAPACITY = 4,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  SPANCONF_STATUS_INVALID_ARGUMENT = 5,
  /**
   * Internal panic; the library state is unchanged.
   */
  SPANCONF_STATUS_PANIC = 6,
} SpanconfStatus;

/**
 * A ranked candidate list for one input.
 */
typedef struct SpanconfBeam SpanconfBeam;

/**
 * A reference model.
 */
typedef struct SpanconfModel SpanconfModel;

typedef struct SpanconfMethodConfig {
  enum SpanconfMethod method;
  size_t k;
  /**
   * Offset for AdaAggSeq.
   */
  size_t b;
  enum SpanconfAggSpanMode aggspan_mode;
  /**
   * Temperature of the rescoring model; 1 leaves it unchanged.
   */
  double tau;
} SpanconfMethodConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *spanconf_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void spanconf_string_free(char *s);

/**
 * Build a model from its JSON description.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum SpanconfStatus spanconf_model_from_json(const char *json, struct SpanconfModel **out);

/**
 * Load a built-in model by name.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
enum SpanconfStatus spanconf_model_preset(const char *name, struct SpanconfModel **out);

/**
 * # Safety
 * `model` must be null or a live handle from this library.
 */
void spanconf_model_free(struct SpanconfModel *model);

/**
 * Beam-decode `words` with the model flattened or sharpened by `tau`.
 *
 * # Safety
 * `words` must point to `n_words` nul-terminated strings; `out` must be writable.
 */
enum SpanconfStatus spanconf_beam_search(const struct SpanconfModel *model,
                                         const char *id,
                                         const char *const *words,
                                         size_t n_words,
                                         size_t k,
                                         double tau,
                                         struct SpanconfBeam **out);

/**
 * Load one predictions-file record produced elsewhere. Tags are checked
 * against the model's labels.
 *
 * # Safety
 * `record_json` must be a nul-terminated string; `words` must point to
 * `n_words` nul-terminated strings; `out` must be writable.
 */
enum SpanconfStatus spanconf_beam_from_prediction(const struct SpanconfModel *model,
                                                  const char *record_json,
                                                  const char *const *words,
                                                  size_t n_words,
                                                  struct SpanconfBeam **out);

/**
 * # Safety
 * `beam` must be null or a live handle from this library.
 */
void spanconf_beam_free(struct SpanconfBeam *beam);

/**
 * Number of well-formed candidates in the beam.
 *
 * # Safety
 * `beam` must be a live handle; `out` must be writable.
 */
enum SpanconfStatus spanconf_beam_len(const struct SpanconfBeam *beam, size_t *out);

/**
 * The beam as a predictions-file record (JSON).
 *
 * # Safety
 * `beam` must be a live handle; `out` must be writable. Free the result with
 * [`spanconf_string_free`].
 */
enum SpanconfStatus spanconf_beam_to_json(const struct SpanconfBeam *beam, char **out);

/**
 * Confidence of every top-1 span, left to right, written to `out[0..cap]`.
 * `n_out` receives the number of spans scored, which may exceed `cap`.
 * `model` may be null unless AggSpan runs in rescoring mode.
 *
 * # Safety
 * Handles must be live; `out` must hold `cap` doubles; `n_out` must be writable.
 */
enum SpanconfStatus spanconf_score(const struct SpanconfBeam *beam,
                                   const struct SpanconfModel *model,
                                   const struct SpanconfMethodConfig *cfg,
                                   double *out,
                                   size_t cap,
                                   size_t *n_out);

/**
 * Like [`spanconf_score`], returning scored-span records as a JSON array.
 *
 * # Safety
 * Handles must be live; `out` must be writable. Free the result with
 * [`spanconf_string_free`].
 */
enum SpanconfStatus spanconf_score_json(const struct SpanconfBeam *beam,
                                        const struct SpanconfModel *model,
                                        const struct SpanconfMethodConfig *cfg,
                                        char **out);

/**
 * Expected calibration error over `n` spans with `bins` equal-width bins.
 * `correct[i]` is nonzero for a correct span.
 *
 * # Safety
 * `confidence` and `correct` must each hold `n` elements; `out` must be writable.
 */
enum SpanconfStatus spanconf_ece(const double *confidence,
                                 const uint8_t *correct,
                                 size_t n,
                                 size_t bins,
                                 double *out);

/**
 * `max(2, min(a + b, k))`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SpanconfStatus spanconf_adaptive_k(size_t a, size_t b, size_t k, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPANCONF_H */
