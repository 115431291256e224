#ifndef SDGBP_H
#define SDGBP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum SdgbpStatus {
  SDGBP_STATUS_OK = 0,
  SDGBP_STATUS_NULL_POINTER = 1,
  /**
   * Bad configuration, argument or usage.
   */
  SDGBP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The discrete state became unusable.
   */
  SDGBP_STATUS_NUMERICAL = 3,
  SDGBP_STATUS_IO = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  SDGBP_STATUS_PANIC = 5,
} SdgbpStatus;

/**
 * Moment profiles available from [`sdgbp_simulation_moment`].
 */
typedef enum SdgbpMoment {
  SDGBP_MOMENT_X = 0,
  SDGBP_MOMENT_DENSITY = 1,
  SDGBP_MOMENT_MOMENTUM = 2,
  SDGBP_MOMENT_ENERGY = 3,
  SDGBP_MOMENT_VELOCITY = 4,
  SDGBP_MOMENT_EFIELD = 5,
  SDGBP_MOMENT_POTENTIAL = 6,
  /**
   * Per-cell `E[f]`, length `nx*nr*nmu`.
   */
  SDGBP_MOMENT_MEAN = 7,
  /**
   * Per-cell `Var[f]`, length `nx*nr*nmu`.
   */
  SDGBP_MOMENT_VARIANCE = 8,
} SdgbpMoment;

/**
 * Opaque simulation handle.
 */
typedef struct SdgbpSimulation SdgbpSimulation;

/**
 * Kernel constants and 2x2 matrices, row-major.
 */
typedef struct SdgbpKernels {
  double a;
  double b;
  double n_q;
  double n_divisor;
  double c_minus[4];
  double c_minus_polylog[4];
  double c_plus[4];
  double recomb_split[4];
} SdgbpKernels;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *sdgbp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sdgbp_version(void);

/**
 * Kernel constants and matrices for divisor `n_divisor`, in the orthonormal
 * basis if `orthonormal` is nonzero and in the unnormalized one otherwise.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `SdgbpKernels`.
 */
enum SdgbpStatus sdgbp_kernels(double n_divisor, int32_t orthonormal, struct SdgbpKernels *out);

/**
 * Create a simulation from TOML text; null `config_toml` uses the defaults.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must point to
 * writable storage for one pointer. Free the handle with
 * [`sdgbp_simulation_free`].
 */
enum SdgbpStatus sdgbp_simulation_new(const char *config_toml, struct SdgbpSimulation **out);

/**
 * # Safety
 * `sim` must be null or a handle from [`sdgbp_simulation_new`] not yet freed.
 */
void sdgbp_simulation_free(struct SdgbpSimulation *sim);

/**
 * Current time [ps]; NaN for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
double sdgbp_simulation_time(const struct SdgbpSimulation *sim);

/**
 * Grid sizes `[nx, nr, nmu]`.
 *
 * # Safety
 * `sim` must be a live handle and `dims` must point to 3 writable `size_t`.
 */
enum SdgbpStatus sdgbp_simulation_dims(struct SdgbpSimulation *sim, size_t *dims);

/**
 * One step of size at most `dt_max` [ps]; the size taken goes to `dt_taken`
 * when it is non-null.
 *
 * # Safety
 * `sim` must be a live handle; `dt_taken` null or writable.
 */
enum SdgbpStatus sdgbp_simulation_step(struct SdgbpSimulation *sim,
                                       double dt_max,
                                       double *dt_taken);

/**
 * Advance to `t_end` [ps].
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum SdgbpStatus sdgbp_simulation_advance(struct SdgbpSimulation *sim, double t_end);

/**
 * Copy a moment profile into `buf`. The required length is always written
 * to `len_out` (when non-null); if `cap` is too small nothing is copied and
 * `InvalidArgument` is returned.
 *
 * # Safety
 * `sim` must be a live handle; `buf` must hold `cap` doubles or be null with
 * `cap == 0`.
 */
enum SdgbpStatus sdgbp_simulation_moment(struct SdgbpSimulation *sim,
                                         enum SdgbpMoment which,
                                         double *buf,
                                         size_t cap,
                                         size_t *len_out);

/**
 * Run a configuration file to completion and write the run directory.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum SdgbpStatus sdgbp_run(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDGBP_H */
