/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef MMLT_H
#define MMLT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MmltStatus {
  MMLT_STATUS_OK = 0,
  MMLT_STATUS_NULL_POINTER,
  MMLT_STATUS_INVALID_UTF8,
  MMLT_STATUS_PARSE,
  MMLT_STATUS_UNBOUND_VARIABLE,
  MMLT_STATUS_NOT_MMLT,
  MMLT_STATUS_UNSUPPORTED_EXPRESSION,
  MMLT_STATUS_MISSING_BINDING,
  MMLT_STATUS_INVALID_MACHINE,
  MMLT_STATUS_NO_FEASIBLE_KERNEL,
  MMLT_STATUS_OPERAND,
  MMLT_STATUS_NON_POSITIVE_TIME,
  MMLT_STATUS_FORMAT,
  MMLT_STATUS_INVALID_ARGUMENT,
  MMLT_STATUS_IO,
  MMLT_STATUS_BUFFER_TOO_SMALL,
  MMLT_STATUS_PANIC,
} MmltStatus;

/**
 * Named inputs and the result matrix for one plan.
 */
typedef struct MmltOperands MmltOperands;

/**
 * A compiled task fixed to the dimensions its bindings gave at compile time.
 */
typedef struct MmltPlan MmltPlan;

/**
 * A parsed task plus its size bindings.
 */
typedef struct MmltTask MmltTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *mmlt_last_error(void);

/**
 * Parse a task written in the loop language.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MmltStatus mmlt_task_parse(const char *source, struct MmltTask **out);

/**
 * Load one of the built-in tasks by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MmltStatus mmlt_task_preset(const char *name, struct MmltTask **out);

/**
 * Set an external size such as `M`, `K` or `N`.
 *
 * # Safety
 * `task` must come from `mmlt_task_parse` or `mmlt_task_preset`; `name` must
 * be NUL-terminated.
 */
enum MmltStatus mmlt_task_bind(struct MmltTask *task, const char *name, int64_t value);

/**
 * # Safety
 * `task` must be null or a live handle; it is invalid afterwards.
 */
void mmlt_task_free(struct MmltTask *task);

/**
 * Recognize, schedule and size a kernel for `task` on a machine with
 * `simd_width` lanes and `registers` vector registers. Dimensions come from
 * the task's current bindings.
 *
 * # Safety
 * `task` must be a live handle and `out` a writable pointer.
 */
enum MmltStatus mmlt_plan_compile(const struct MmltTask *task,
                                  size_t simd_width,
                                  size_t registers,
                                  struct MmltPlan **out);

/**
 * # Safety
 * `plan` must be null or a live handle; it is invalid afterwards.
 */
void mmlt_plan_free(struct MmltPlan *plan);

/**
 * Kernel height and width in elements. Null outputs are skipped.
 *
 * # Safety
 * `plan` must be a live handle; outputs must be null or writable.
 */
enum MmltStatus mmlt_plan_shape(const struct MmltPlan *plan, size_t *i_h, size_t *i_w);

/**
 * Vector registers the chosen kernel occupies.
 *
 * # Safety
 * `plan` must be a live handle; `out` must be null or writable.
 */
enum MmltStatus mmlt_plan_registers(const struct MmltPlan *plan, size_t *out);

/**
 * Iteration extents of the i, k and j loops.
 *
 * # Safety
 * `plan` must be a live handle; outputs must be null or writable.
 */
enum MmltStatus mmlt_plan_dims(const struct MmltPlan *plan, size_t *m, size_t *k, size_t *n);

/**
 * Human-readable kernel plan and register ledger. Free the string with
 * `mmlt_string_free`.
 *
 * # Safety
 * `plan` must be a live handle and `out` a writable pointer.
 */
enum MmltStatus mmlt_plan_explain(const struct MmltPlan *plan, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void mmlt_string_free(char *s);

/**
 * Operands for `plan`: random inputs from `seed` (small integers when
 * `integer_data`, else reals in [-1, 1)) and a zero result.
 *
 * # Safety
 * `plan` must be a live handle and `out` a writable pointer.
 */
enum MmltStatus mmlt_operands_generate(const struct MmltPlan *plan,
                                       uint64_t seed,
                                       bool integer_data,
                                       struct MmltOperands **out);

/**
 * # Safety
 * `ops` must be null or a live handle; it is invalid afterwards.
 */
void mmlt_operands_free(struct MmltOperands *ops);

/**
 * Replace the matrix input `name` with `rows * cols` values, row-major when
 * `row_major` and column-major otherwise.
 *
 * # Safety
 * `ops` must be a live handle, `name` NUL-terminated and `data` must hold
 * `rows * cols` values.
 */
enum MmltStatus mmlt_operands_set_matrix(struct MmltOperands *ops,
                                         const char *name,
                                         size_t rows,
                                         size_t cols,
                                         bool row_major,
                                         const double *data);

/**
 * Replace the vector input `name`.
 *
 * # Safety
 * `ops` must be a live handle, `name` NUL-terminated and `data` must hold
 * `len` values.
 */
enum MmltStatus mmlt_operands_set_vector(struct MmltOperands *ops,
                                         const char *name,
                                         size_t len,
                                         const double *data);

/**
 * Replace the scalar input `name`.
 *
 * # Safety
 * `ops` must be a live handle and `name` NUL-terminated.
 */
enum MmltStatus mmlt_operands_set_scalar(struct MmltOperands *ops, const char *name, double value);

/**
 * Reset every result element to zero.
 *
 * # Safety
 * `ops` must be a live handle.
 */
enum MmltStatus mmlt_operands_clear_result(struct MmltOperands *ops);

/**
 * Shape of the result matrix.
 *
 * # Safety
 * `ops` must be a live handle; outputs must be null or writable.
 */
enum MmltStatus mmlt_operands_result_shape(const struct MmltOperands *ops,
                                           size_t *rows,
                                           size_t *cols);

/**
 * Copy the result row-major into `out`, which holds `len` values.
 *
 * # Safety
 * `ops` must be a live handle and `out` must have room for `len` values.
 */
enum MmltStatus mmlt_operands_result(const struct MmltOperands *ops, double *out, size_t len);

/**
 * Run with runtime-selected tile parameters. Reports the elapsed seconds and
 * the chosen `kc` and `nc`.
 *
 * # Safety
 * `plan` and `ops` must be live handles; outputs must be null or writable.
 */
enum MmltStatus mmlt_execute_adaptive(const struct MmltPlan *plan,
                                      struct MmltOperands *ops,
                                      bool packing,
                                      double *seconds,
                                      size_t *kc,
                                      size_t *nc);

/**
 * Run with fixed tile parameters.
 *
 * # Safety
 * `plan` and `ops` must be live handles; `seconds` must be null or writable.
 */
enum MmltStatus mmlt_execute_fixed(const struct MmltPlan *plan,
                                   struct MmltOperands *ops,
                                   size_t kc,
                                   size_t nc,
                                   bool packing,
                                   double *seconds);

/**
 * Run the reference loop nest exactly as written.
 *
 * # Safety
 * `plan` and `ops` must be live handles; `seconds` must be null or writable.
 */
enum MmltStatus mmlt_execute_naive(const struct MmltPlan *plan,
                                   struct MmltOperands *ops,
                                   double *seconds);

/**
 * Scaled processing rate `m*k*n / (1e9 * seconds)`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum MmltStatus mmlt_spr(size_t m, size_t k, size_t n, double seconds, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMLT_H */
