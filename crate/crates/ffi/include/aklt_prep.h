#ifndef AKLT_PREP_H
#define AKLT_PREP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AkltStatus {
  AKLT_STATUS_OK = 0,
  AKLT_STATUS_NULL_POINTER = 1,
  AKLT_STATUS_INVALID_ARGUMENT = 2,
  AKLT_STATUS_PARSE = 3,
  AKLT_STATUS_QUBIT_CAP = 4,
  AKLT_STATUS_CYCLE_DETECTED = 5,
  AKLT_STATUS_FRUSTRATED = 6,
  AKLT_STATUS_BUFFER_TOO_SMALL = 7,
  AKLT_STATUS_INTERNAL = 8,
  AKLT_STATUS_PANIC = 9,
} AkltStatus;

typedef enum AkltStrategy {
  AKLT_STRATEGY_BSM_CORRECTED = 0,
  AKLT_STRATEGY_BSM_RANDOMBOND = 1,
  AKLT_STRATEGY_HT_DECORATED = 2,
} AkltStrategy;

typedef enum AkltAxis {
  AKLT_AXIS_X = 0,
  AKLT_AXIS_Y = 1,
  AKLT_AXIS_Z = 2,
} AkltAxis;

/**
 * A site graph.
 */
typedef struct AkltLattice AkltLattice;

/**
 * A prepared state with its input graph.
 */
typedef struct AkltPrepared AkltPrepared;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *aklt_version(void);

/**
 * Copy the last error message of this thread into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null with `len == 0`.
 */
enum AkltStatus aklt_last_error(char *buf, uintptr_t len, uintptr_t *needed);

/**
 * Build a lattice from a compact spec such as `hex_patch:1x2`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum AkltStatus aklt_lattice_parse(const char *spec, struct AkltLattice **out);

/**
 * Build a lattice from a `sitegraph/v1` document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum AkltStatus aklt_lattice_from_json(const char *json, struct AkltLattice **out);

/**
 * Number of vertices, or 0 for a null handle.
 *
 * # Safety
 * `l` must be null or a live handle.
 */
uintptr_t aklt_lattice_num_sites(const struct AkltLattice *l);

/**
 * Number of virtual qubits, or 0 for a null handle.
 *
 * # Safety
 * `l` must be null or a live handle.
 */
uintptr_t aklt_lattice_num_qubits(const struct AkltLattice *l);

/**
 * # Safety
 * `l` must be null or a handle not yet freed.
 */
void aklt_lattice_free(struct AkltLattice *l);

/**
 * Number of frustrated independent cycles for an outcome given as one
 * letter per site (`x`, `y`, `z`, `-` for boundary qubits).
 *
 * # Safety
 * `l` must be a live handle, `outcome` a NUL-terminated string, `out` writable.
 */
enum AkltStatus aklt_frustration(const struct AkltLattice *l, const char *outcome, uintptr_t *out);

/**
 * Run the preparation protocol with the random stream `(seed, run)`.
 *
 * # Safety
 * `l` must be a live handle; `out` must be writable.
 */
enum AkltStatus aklt_prepare(const struct AkltLattice *l,
                             enum AkltStrategy strategy,
                             double deformation,
                             uint64_t seed,
                             uint64_t run,
                             struct AkltPrepared **out);

/**
 * Qubit count of the prepared register, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uintptr_t aklt_prepared_num_qubits(const struct AkltPrepared *p);

/**
 * Number of fusion outcomes drawn, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uintptr_t aklt_prepared_num_fusions(const struct AkltPrepared *p);

/**
 * Copy the amplitudes (qubit 0 most significant) into `re` and `im`,
 * each of length `len` = 2^num_qubits.
 *
 * # Safety
 * `p` must be a live handle; `re` and `im` must each hold `len` doubles.
 */
enum AkltStatus aklt_prepared_amplitudes(const struct AkltPrepared *p,
                                         double *re,
                                         double *im,
                                         uintptr_t len);

/**
 * Fidelity with the reference state built by explicit projection on the
 * realized graph.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum AkltStatus aklt_prepared_fidelity(const struct AkltPrepared *p, double *out);

/**
 * Serialize as `prepared/v1` JSON. Call with a null `buf` and `len = 0`
 * to learn the size through `needed`.
 *
 * # Safety
 * `p` must be a live handle; `buf` must hold `len` bytes or be null.
 */
enum AkltStatus aklt_prepared_to_json(const struct AkltPrepared *p,
                                      char *buf,
                                      uintptr_t len,
                                      uintptr_t *needed);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void aklt_prepared_free(struct AkltPrepared *p);

/**
 * String order parameter from the transfer matrices.
 *
 * # Safety
 * `out` must be writable.
 */
enum AkltStatus aklt_string_order(double a, uintptr_t r, enum AkltAxis ax, double *out);

/**
 * Largest entry of the POVM completeness sum minus the symmetric
 * projector, for spin `two_s / 2`.
 *
 * # Safety
 * `out` must be writable.
 */
enum AkltStatus aklt_povm_completeness_defect(uintptr_t two_s, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AKLT_PREP_H */
