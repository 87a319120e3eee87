#ifndef NPS_H
#define NPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of values written by [`nps_simulation_diagnostics`].
 */
#define NPS_DIAGNOSTICS_LEN 16

/**
 * Fields that can be copied out of a simulation.
 */
typedef enum NpsField {
  NPS_FIELD_C1 = 0,
  NPS_FIELD_C2 = 1,
  NPS_FIELD_PHI = 2,
  NPS_FIELD_RHO = 3,
  /**
   * x-face velocities, `(nx + 1) * ny` values.
   */
  NPS_FIELD_UX = 4,
  /**
   * y-face velocities, `nx * (ny + 1)` values.
   */
  NPS_FIELD_UY = 5,
} NpsField;

/**
 * Status codes returned by every function.
 */
typedef enum NpsStatus {
  NPS_STATUS_OK = 0,
  NPS_STATUS_NULL_POINTER = 1,
  NPS_STATUS_CONFIG = 2,
  NPS_STATUS_SOLVER = 3,
  NPS_STATUS_IO = 4,
  NPS_STATUS_FORMAT = 5,
  NPS_STATUS_INVALID_ARGUMENT = 6,
  NPS_STATUS_BUFFER_TOO_SMALL = 7,
  NPS_STATUS_PANIC = 8,
} NpsStatus;

/**
 * Opaque simulation handle.
 */
typedef struct NpsSimulation NpsSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *nps_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t nps_last_error(char *buf, size_t len);

/**
 * Builds a simulation from a TOML configuration text.
 *
 * # Safety
 * `config` must be a NUL-terminated string; `out` must be writable.
 */
enum NpsStatus nps_simulation_new(const char *config, struct NpsSimulation **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from [`nps_simulation_new`] and not be used afterwards.
 */
void nps_simulation_free(struct NpsSimulation *sim);

/**
 * Integrates to time `t` (not before the current time).
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum NpsStatus nps_simulation_advance(struct NpsSimulation *sim, double t);

/**
 * Current simulation time.
 *
 * # Safety
 * `sim` must be a live handle and `t` writable.
 */
enum NpsStatus nps_simulation_time(struct NpsSimulation *sim, double *t);

/**
 * Grid dimensions.
 *
 * # Safety
 * `sim` must be a live handle; `nx`, `ny` writable.
 */
enum NpsStatus nps_simulation_grid(struct NpsSimulation *sim, size_t *nx, size_t *ny);

/**
 * Copies a field into `buf`. `len` must be at least the field length,
 * which is written to `written` (may be null).
 *
 * # Safety
 * `sim` must be a live handle; `buf` must hold `len` doubles.
 */
enum NpsStatus nps_simulation_copy_field(struct NpsSimulation *sim,
                                         enum NpsField field,
                                         double *buf,
                                         size_t len,
                                         size_t *written);

/**
 * Writes the diagnostics of the current state in CSV column order
 * (`NPS_DIAGNOSTICS_LEN` values).
 *
 * # Safety
 * `sim` must be a live handle; `out` must hold `NPS_DIAGNOSTICS_LEN` doubles.
 */
enum NpsStatus nps_simulation_diagnostics(struct NpsSimulation *sim, double *out);

/**
 * Writes a binary checkpoint of the current state.
 *
 * # Safety
 * `sim` must be a live handle; `path` a NUL-terminated string.
 */
enum NpsStatus nps_simulation_save(struct NpsSimulation *sim, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPS_H */
