#ifndef CFA2_H
#define CFA2_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Values for the `analysis` argument of [`cfa2_analyze`].
 */
typedef enum Cfa2Analysis {
  CFA2_ANALYSIS_CFA2 = 0,
  CFA2_ANALYSIS_ZERO_CFA = 1,
  CFA2_ANALYSIS_ONE_CFA = 2,
} Cfa2Analysis;

/**
 * Status codes returned by every fallible function.
 */
typedef enum Cfa2Status {
  CFA2_STATUS_OK = 0,
  CFA2_STATUS_NULL_ARGUMENT = 1,
  CFA2_STATUS_INVALID_UTF8 = 2,
  /**
   * The source failed to parse or validate.
   */
  CFA2_STATUS_COMPILE_ERROR = 3,
  /**
   * The concrete run got stuck.
   */
  CFA2_STATUS_STUCK = 4,
  CFA2_STATUS_OUT_OF_FUEL = 5,
  CFA2_STATUS_INVALID_ARGUMENT = 6,
  CFA2_STATUS_PANIC = 7,
} Cfa2Status;

/**
 * A compiled program.
 */
typedef struct Cfa2Program Cfa2Program;

/**
 * Analyzer switches; [`cfa2_default_options`] gives the defaults.
 */
typedef struct Cfa2Options {
  bool stack_filtering;
  bool heap_widening;
  bool branch_pruning;
} Cfa2Options;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message for the most recent failure on this thread, or null. The
 * pointer stays valid until the next call into this library.
 */
const char *cfa2_last_error(void);

struct Cfa2Options cfa2_default_options(void);

/**
 * Compiles `source`; `name` (may be null) labels reports.
 *
 * # Safety
 * `source` and `name` must be null or NUL-terminated strings; `out` must be
 * valid for writes.
 */
enum Cfa2Status cfa2_compile(const char *source, const char *name, struct Cfa2Program **out);

/**
 * Runs the program on the concrete machine for at most `fuel` steps and
 * writes the printed result.
 *
 * # Safety
 * `program` must come from [`cfa2_compile`]; `out` must be valid for writes.
 */
enum Cfa2Status cfa2_run(const struct Cfa2Program *program, uint64_t fuel, char **out);

/**
 * Analyzes the program and writes the report as JSON. `analysis` is one
 * of [`Cfa2Analysis`]; `options` may be null for the defaults.
 *
 * # Safety
 * `program` must come from [`cfa2_compile`]; `options` must be null or
 * valid; `out` must be valid for writes.
 */
enum Cfa2Status cfa2_analyze(const struct Cfa2Program *program,
                             int32_t analysis,
                             const struct Cfa2Options *options,
                             char **out);

/**
 * Releases a program. Null is ignored.
 *
 * # Safety
 * `program` must be null or come from [`cfa2_compile`], and not be used
 * afterwards.
 */
void cfa2_program_free(struct Cfa2Program *program);

/**
 * Releases a string written by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or come from this library, and not be used afterwards.
 */
void cfa2_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFA2_H */
