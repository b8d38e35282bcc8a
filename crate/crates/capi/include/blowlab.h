#ifndef BLOWLAB_H
#define BLOWLAB_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from the blowlab-capi crate; do not edit by hand. */

#include <stdint.h>
#include <stddef.h>
#include <stdbool.h>

// Status codes returned by every fallible call.
typedef enum BlStatus {
  BL_STATUS_OK = 0,
  BL_STATUS_NULL_POINTER = 1,
  BL_STATUS_INVALID_ARGUMENT = 2,
  BL_STATUS_VALIDATION_FAILED = 3,
  BL_STATUS_NUMERICAL_FAILURE = 4,
  BL_STATUS_NOT_AVAILABLE = 5,
  BL_STATUS_PANIC = 6,
} BlStatus;

// Columns addressable through the bulk copy calls.
typedef enum BlColumn {
  BL_COLUMN_TIME = 0,
  BL_COLUMN_F = 1,
  BL_COLUMN_F0 = 2,
  BL_COLUMN_G_COMP = 3,
  BL_COLUMN_TAU = 4,
  BL_COLUMN_H_UP = 5,
  BL_COLUMN_CHI_UP = 6,
  BL_COLUMN_G_FRAK = 7,
  BL_COLUMN_XI = 8,
  BL_COLUMN_XI_CAP = 9,
  BL_COLUMN_S_VAL = 10,
} BlColumn;

// Opaque compactified trace.
typedef struct BlCompact BlCompact;

// Opaque parameter set.
typedef struct BlParams BlParams;

// Opaque reference trajectory (parameters + derived constants + trace).
typedef struct BlTrace BlTrace;

// Flat mirror of the derived closed-form constants. Optional entries
// come with a `has_*` flag instead of a sentinel.
typedef struct BlDerived {
  double triangle;
  double a_bar;
  double c_bar;
  double b_coef;
  double c_a;
  double c_b;
  double c_c;
  double c_d;
  double c_e;
  int has_c_e;
  double t_star;
  double t_upper;
  int has_t_upper;
  double beta_breve;
  int has_beta_breve;
  double b_geom;
  double q_mag;
} BlDerived;

// One sampled state of the compactified trace.
typedef struct BlCompactPoint {
  double tau;
  double h_up;
  double f;
  double f0;
  double chi_over_b;
  double g_over_b;
  double xi;
  double xi_cap;
  double s_val;
} BlCompactPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent error on this thread. Borrowed pointer;
// valid until the next failing call on the same thread.
const char *bl_last_error(void);

// Library version as a static string.
const char *bl_version(void);

// New parameter set with the built-in defaults. Free with
// `bl_params_free`.
struct BlParams *bl_params_new(void);

// Parse a TOML parameter file body. Returns null on parse failure (see
// `bl_last_error`).
//
// # Safety
// `text` must be a valid NUL-terminated string.
struct BlParams *bl_params_from_toml(const char *text);

// # Safety
// `p` must come from a `bl_params_*` constructor (or be null).
void bl_params_free(struct BlParams *p);

// Set one parameter by its config key ("a", "b", ..., "A", "delta0").
//
// # Safety
// `p` must be a live handle, `key` a valid NUL-terminated string.
enum BlStatus bl_params_set(struct BlParams *p, const char *key, double value);

// Read one parameter by key.
//
// # Safety
// `p` and `out` must be valid; `key` a NUL-terminated string.
enum BlStatus bl_params_get(const struct BlParams *p, const char *key, double *out);

// Run the assumption/range checks: Ok when everything passes,
// ValidationFailed otherwise (message lists the failed checks).
//
// # Safety
// `p` must be a live handle.
enum BlStatus bl_params_validate(const struct BlParams *p);

// Fill the flat derived-constants struct.
//
// # Safety
// `p` and `out` must be valid pointers.
enum BlStatus bl_derived_compute(const struct BlParams *p, struct BlDerived *out);

// Integrate the reference problem in blow-up mode (positive `cap`) or
// to the horizon `t_end` (when `t_end > 0`; `cap` ignored then).
// Returns null on failure.
//
// # Safety
// `p` must be a live handle.
struct BlTrace *bl_trace_run(const struct BlParams *p, double t_end, double cap, uintptr_t samples);

// # Safety
// `t` must come from `bl_trace_run` (or be null).
void bl_trace_free(struct BlTrace *t);

// Number of samples in the trace.
//
// # Safety
// `t` must be a live handle.
uintptr_t bl_trace_len(const struct BlTrace *t);

// Copy one column into `out` (capacity `len`; returns the number of
// values written through `written`).
//
// # Safety
// `out` must point to at least `len` writable doubles.
enum BlStatus bl_trace_copy(const struct BlTrace *t,
                            enum BlColumn column,
                            double *out,
                            uintptr_t len,
                            uintptr_t *written);

// Blow-up bracket of a blow-up-mode trace; NotAvailable otherwise.
//
// # Safety
// All pointers must be valid.
enum BlStatus bl_trace_blowup_bracket(const struct BlTrace *t, double *lo, double *hi);

// Build the compactified trace from a reference trace. Returns null on
// failure.
//
// # Safety
// `t` must be a live trace handle.
struct BlCompact *bl_compact_build(const struct BlTrace *t, double tau_floor);

// # Safety
// `c` must come from `bl_compact_build` (or be null).
void bl_compact_free(struct BlCompact *c);

// Number of grid points in the compactified trace.
//
// # Safety
// `c` must be a live handle.
uintptr_t bl_compact_len(const struct BlCompact *c);

// Copy one column of the compactified table.
//
// # Safety
// `out` must point to at least `len` writable doubles.
enum BlStatus bl_compact_copy(const struct BlCompact *c,
                              enum BlColumn column,
                              double *out,
                              uintptr_t len,
                              uintptr_t *written);

// Evaluate the compactified state at an arbitrary tau in [-1, 0).
//
// # Safety
// `c` and `out` must be valid pointers.
enum BlStatus bl_compact_point(const struct BlCompact *c, double tau, struct BlCompactPoint *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOWLAB_H */
