/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef RENORMTRACE_H
#define RENORMTRACE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtStatus {
  RT_STATUS_OK = 0,
  RT_STATUS_NULL_POINTER = 1,
  RT_STATUS_INVALID_INPUT = 2,
  RT_STATUS_PARSE = 3,
  RT_STATUS_UNSUPPORTED = 4,
  RT_STATUS_NUMERICAL = 5,
  RT_STATUS_HYPOTHESIS = 6,
  RT_STATUS_PANIC = 7,
} RtStatus;

/**
 * Quantized operator at a fixed cutoff.
 */
typedef struct RtOperator RtOperator;

/**
 * Result of a scenario run.
 */
typedef struct RtReport RtReport;

/**
 * Positive self-adjoint weight at a fixed cutoff.
 */
typedef struct RtWeight RtWeight;

typedef struct RtComplex {
  double re;
  double im;
} RtComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rt_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *rt_last_error(void);

/**
 * Builds a weight from a JSON operator literal at cutoff N (modes −N..N).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RtStatus rt_weight_from_json(const char *json, size_t cutoff, struct RtWeight **out);

/**
 * Smallest cutoff whose heat tail at `eps`, for entries growing like
 * |n|^growth, is below `tolerance`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RtStatus rt_cutoff_for_tail(const char *json,
                                 double eps,
                                 double growth,
                                 double tolerance,
                                 size_t *out);

/**
 * # Safety
 * `w` must be NULL or a handle from `rt_weight_from_json` not yet freed.
 */
void rt_weight_free(struct RtWeight *w);

/**
 * Quantizes a JSON operator literal at cutoff N.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RtStatus rt_operator_from_json(const char *json, size_t cutoff, struct RtOperator **out);

/**
 * # Safety
 * `a` must be NULL or a handle from `rt_operator_from_json` not yet freed.
 */
void rt_operator_free(struct RtOperator *a);

/**
 * tr(A e^{−εQ}) at the shared cutoff.
 *
 * # Safety
 * Handles must be live; `out` must be valid.
 */
enum RtStatus rt_heat_trace(const struct RtOperator *a,
                            const struct RtWeight *q,
                            double eps,
                            struct RtComplex *out);

/**
 * μ-renormalized weighted trace with default fitting options.
 *
 * # Safety
 * Handles must be live; `out` must be valid.
 */
enum RtStatus rt_weighted_trace(const struct RtOperator *a,
                                const struct RtWeight *q,
                                double mu,
                                struct RtComplex *out);

/**
 * Noncommutative residue of a symbol-representable literal.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RtStatus rt_residue(const char *json, struct RtComplex *out);

/**
 * Runs a scenario given as JSON text. Failing checks still yield a report
 * (inspect `rt_report_passed`); only parse and validation errors fail.
 *
 * # Safety
 * `scenario_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RtStatus rt_scenario_run(const char *scenario_json, struct RtReport **out);

/**
 * True iff every row of the report passed; false for NULL.
 *
 * # Safety
 * `r` must be NULL or a live report handle.
 */
bool rt_report_passed(const struct RtReport *r);

/**
 * Number of rows in the report; 0 for NULL.
 *
 * # Safety
 * `r` must be NULL or a live report handle.
 */
size_t rt_report_rows(const struct RtReport *r);

/**
 * JSON text of the report, owned by the handle.
 *
 * # Safety
 * `r` must be NULL or a live report handle.
 */
const char *rt_report_json(const struct RtReport *r);

/**
 * # Safety
 * `r` must be NULL or a report handle not yet freed.
 */
void rt_report_free(struct RtReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RENORMTRACE_H */
