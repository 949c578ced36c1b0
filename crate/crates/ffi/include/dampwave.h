#ifndef DAMPWAVE_H
#define DAMPWAVE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every entry point.
 */
typedef enum DwStatus {
  DW_STATUS_OK = 0,
  DW_STATUS_NULL_POINTER = 1,
  DW_STATUS_INVALID_ARGUMENT = 2,
  DW_STATUS_BUFFER_TOO_SMALL = 3,
  DW_STATUS_NUMERICAL = 4,
  DW_STATUS_CAPACITY_EXCEEDED = 5,
  DW_STATUS_PANIC = 6,
} DwStatus;

typedef enum DwLaw {
  DW_LAW_NONE = 0,
  DW_LAW_BRINKMAN = 1,
  DW_LAW_MODIFIED = 2,
} DwLaw;

typedef enum DwProfileKind {
  DW_PROFILE_KIND_ZERO = 0,
  DW_PROFILE_KIND_CONSTANT = 1,
  DW_PROFILE_KIND_BOUNDARY_COLLAR = 2,
  DW_PROFILE_KIND_INTERIOR_BUMP = 3,
  DW_PROFILE_KIND_VANISHING_SMOOTH = 4,
} DwProfileKind;

/**
 * Opaque laboratory handle.
 */
typedef struct DwLab DwLab;

/**
 * Damping profile; fields a kind does not use are ignored.
 */
typedef struct DwProfile {
  enum DwProfileKind kind;
  double level;
  double width;
  double center_x;
  double center_y;
  double radius;
} DwProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a laboratory on an `nx` by `ny` grid over `[0, lx] x [0, ly]`.
 *
 * # Safety
 * `profile_spec` must point to a valid `DwProfile` and `out_lab` to writable storage.
 */
enum DwStatus dw_lab_new(size_t nx,
                         size_t ny,
                         double lx,
                         double ly,
                         enum DwLaw law,
                         const struct DwProfile *profile_spec,
                         struct DwLab **out_lab);

/**
 * Releases a laboratory. Null is ignored.
 *
 * # Safety
 * `lab` must come from `dw_lab_new` and not be used afterwards.
 */
void dw_lab_free(struct DwLab *lab);

/**
 * Length of a state vector, `3 nx ny - nx - ny`.
 *
 * # Safety
 * `lab` must be a live handle and `out_dim` writable.
 */
enum DwStatus dw_lab_state_dim(const struct DwLab *lab, size_t *out_dim);

/**
 * Energy `(|u|^2 + |r|^2) / 2` of a state.
 *
 * # Safety
 * `z` must hold `len` doubles and `out_energy` be writable.
 */
enum DwStatus dw_lab_energy(const struct DwLab *lab,
                            const double *z,
                            size_t len,
                            double *out_energy);

/**
 * Writes the damped generator applied to `z` into `dst`.
 *
 * # Safety
 * `z` must hold `len` doubles and `dst` have room for `dst_len`.
 */
enum DwStatus dw_lab_apply_generator(const struct DwLab *lab,
                                     const double *z,
                                     size_t len,
                                     double *dst,
                                     size_t dst_len);

/**
 * Integrates `nsteps` implicit midpoint steps of size `dt` from `z0`.
 *
 * `energies` receives `nsteps + 1` values. `z_final` may be null; otherwise
 * it receives the final state.
 *
 * # Safety
 * Buffers must be valid for the given lengths.
 */
enum DwStatus dw_lab_simulate(const struct DwLab *lab,
                              const double *z0,
                              size_t len,
                              double dt,
                              size_t nsteps,
                              double *energies,
                              size_t energies_len,
                              double *z_final);

/**
 * `||(i beta - A)^{-1}||` on the complement of the generator kernel.
 *
 * The dense reduced generator is built on first use and cached in the handle.
 *
 * # Safety
 * `lab` must be a live handle and `out_norm` writable.
 */
enum DwStatus dw_lab_resolvent_norm(const struct DwLab *lab, double beta, double *out_norm);

/**
 * Observability constant of the damping over `[0, horizon]`.
 *
 * A nonpositive `dt` selects the default quadrature step.
 *
 * # Safety
 * `lab` must be a live handle and `out_constant` writable.
 */
enum DwStatus dw_lab_observability_constant(const struct DwLab *lab,
                                            double horizon,
                                            double dt,
                                            double *out_constant);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must have room for `len` bytes, or be null with `len` zero.
 */
size_t dw_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dw_version(void);

/**
 * Nonzero when the status is `DW_STATUS_OK`.
 */
int dw_status_ok(enum DwStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DAMPWAVE_H */
