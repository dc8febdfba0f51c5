#ifndef GROUNDCHECK_H
#define GROUNDCHECK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GcStatus {
  GC_STATUS_OK = 0,
  GC_STATUS_NULL_ARGUMENT = 1,
  GC_STATUS_INVALID_UTF8 = 2,
  GC_STATUS_INVALID_ARGUMENT = 3,
  GC_STATUS_IO = 4,
  GC_STATUS_PARSE = 5,
  GC_STATUS_UNDEFINED = 6,
  GC_STATUS_PANIC = 7,
} GcStatus;

typedef enum GcFactuality {
  GC_FACTUALITY_VERY_HIGH = 0,
  GC_FACTUALITY_HIGH = 1,
  GC_FACTUALITY_MOSTLY_FACTUAL = 2,
  GC_FACTUALITY_MIXED = 3,
  GC_FACTUALITY_LOW = 4,
  GC_FACTUALITY_VERY_LOW = 5,
  GC_FACTUALITY_SATIRE = 6,
  GC_FACTUALITY_NOT_RATED = 7,
} GcFactuality;

/**
 * Opaque handle to a loaded rating database.
 */
typedef struct GcRatingDb GcRatingDb;

typedef struct GcRating {
  enum GcFactuality factuality;
  /**
   * One of -1, -0.5, 0, 0.5, 1.
   */
  double score;
  /**
   * False for domains without a rating.
   */
  bool classified;
} GcRating;

/**
 * A rate and its interval. When `defined` is false the other floating
 * point fields are NaN.
 */
typedef struct GcMetric {
  uint64_t x;
  uint64_t n;
  bool defined;
  double rate;
  double ci_low;
  double ci_high;
} GcMetric;

typedef struct GcRates {
  struct GcMetric credibility;
  struct GcMetric non_credibility;
  uint64_t neutral;
  uint64_t not_rated;
} GcRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *gc_last_error_message(void);

/**
 * Loads a rating CSV file (`domain,factuality,category,origin`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_db` a writable pointer.
 */
enum GcStatus gc_rating_db_load(const char *path, struct GcRatingDb **out_db);

/**
 * Parses rating CSV text held in memory.
 *
 * # Safety
 * `csv` must be a NUL-terminated string and `out_db` a writable pointer.
 */
enum GcStatus gc_rating_db_from_csv(const char *csv, struct GcRatingDb **out_db);

/**
 * Releases a database. Null is ignored.
 *
 * # Safety
 * `db` must come from this library and not be used afterwards.
 */
void gc_rating_db_free(struct GcRatingDb *db);

/**
 * Number of rated domains.
 *
 * # Safety
 * `db` must be a live handle and `out_len` writable.
 */
enum GcStatus gc_rating_db_len(const struct GcRatingDb *db, size_t *out_len);

/**
 * Rating of a domain by exact host, then longest registered suffix.
 * Unknown domains give `NOT_RATED` with status OK.
 *
 * # Safety
 * `db` must be a live handle, `domain` NUL-terminated and `out_rating` writable.
 */
enum GcStatus gc_rating_db_lookup(const struct GcRatingDb *db,
                                  const char *domain,
                                  struct GcRating *out_rating);

/**
 * Numeric credibility score of a factuality level.
 *
 * # Safety
 * `out_score` must be writable.
 */
enum GcStatus gc_score(enum GcFactuality level, double *out_score);

/**
 * Lowercase host of `url` with a leading `www.` removed. The result must be
 * released with [`gc_string_free`].
 *
 * # Safety
 * `url` must be NUL-terminated and `out_domain` writable.
 */
enum GcStatus gc_extract_domain(const char *url, char **out_domain);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void gc_string_free(char *s);

/**
 * Agresti–Coull interval for `x` successes out of `n` at `confidence`,
 * clamped to [0, 1].
 *
 * # Safety
 * `out_low` and `out_high` must be writable.
 */
enum GcStatus gc_agresti_coull(uint64_t x,
                               uint64_t n,
                               double confidence,
                               double *out_low,
                               double *out_high);

/**
 * Credibility and non-credibility rates over cited domains, pooled over
 * classified domains only. Duplicates count once per occurrence.
 *
 * # Safety
 * `db` must be a live handle, `domains` an array of `count` NUL-terminated
 * strings (may be null when `count` is 0) and `out_rates` writable.
 */
enum GcStatus gc_credibility_rates(const struct GcRatingDb *db,
                                   const char *const *domains,
                                   size_t count,
                                   double confidence,
                                   struct GcRates *out_rates);

/**
 * Hallucination score `(unsupported + alpha * undecidable) / sqrt(verifiable)`.
 * `UNDEFINED` when there are no verifiable units.
 *
 * # Safety
 * `out_hs` must be writable.
 */
enum GcStatus gc_hallucination_score(uint64_t unsupported,
                                     uint64_t undecidable,
                                     uint64_t verifiable,
                                     double alpha,
                                     double *out_hs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUNDCHECK_H */
