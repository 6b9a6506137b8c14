#ifndef METASTAB_H
#define METASTAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_ARGUMENT = 2,
  MS_STATUS_DIMENSION = 3,
  MS_STATUS_RESOURCE = 4,
  MS_STATUS_NON_HERMITIAN = 5,
  MS_STATUS_NUMERIC = 6,
  MS_STATUS_SINGULAR = 7,
  MS_STATUS_QUADRATURE = 8,
  MS_STATUS_CONFIG = 9,
  MS_STATUS_IO = 10,
  MS_STATUS_GATE_FAILED = 11,
  MS_STATUS_PANIC = 12,
} MsStatus;

/*
 Hamiltonian with its eigendecomposition.
 */
typedef struct MsHamiltonian MsHamiltonian;

/*
 Lindbladian with single-qubit Pauli jumps, together with its Gibbs state.
 */
typedef struct MsLindbladian MsLindbladian;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version and code hash, as a static NUL-terminated string.
 */
const char *ms_version(void);

/*
 Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
 `len` bytes) and returns its full length without the terminator.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t ms_last_error_message(char *buf, size_t len);

/*
 Builds a Hamiltonian from its JSON description (preset or explicit term list).

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MsStatus ms_hamiltonian_from_json(const char *json, struct MsHamiltonian **out);

/*
 # Safety
 `h` must be null or a handle from `ms_hamiltonian_from_json` not yet freed.
 */
void ms_hamiltonian_free(struct MsHamiltonian *h);

/*
 # Safety
 `h` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_hamiltonian_num_qubits(const struct MsHamiltonian *h, size_t *out);

/*
 Writes the 2^n eigenvalues in ascending order.

 # Safety
 `h` must be a live handle and `out` must point to `len` writable doubles.
 */
enum MsStatus ms_hamiltonian_energies(const struct MsHamiltonian *h, double *out, size_t len);

/*
 Lindbladian with X, Y, Z jumps on each listed qubit (all qubits when `qubits` is null).
 A non-positive `sigma` selects 1/beta.

 # Safety
 `h` must be a live handle, `qubits` null or `n_qubits` readable values, `out` valid.
 */
enum MsStatus ms_lindbladian_new(const struct MsHamiltonian *h,
                                 double beta,
                                 double sigma,
                                 double eta,
                                 const size_t *qubits,
                                 size_t n_qubits,
                                 struct MsLindbladian **out);

/*
 # Safety
 `l` must be null or a handle from `ms_lindbladian_new` not yet freed.
 */
void ms_lindbladian_free(struct MsLindbladian *l);

/*
 # Safety
 `l` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_lindbladian_dim(const struct MsLindbladian *l, size_t *out);

/*
 # Safety
 `l` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_lindbladian_num_jumps(const struct MsLindbladian *l, size_t *out);

/*
 Trace norm of L applied to the Gibbs state.

 # Safety
 `l` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_fixed_point_residual(const struct MsLindbladian *l, double *out);

/*
 Largest KMS self-adjointness defect of the dissipative part over random operator pairs.

 # Safety
 `l` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_kms_residual(const struct MsLindbladian *l,
                              size_t trials,
                              uint64_t seed,
                              double *out);

/*
 out = L[x] for an arbitrary d x d matrix x.

 # Safety
 `l` must be a live handle; `x` and `out` must hold `len` doubles each.
 */
enum MsStatus ms_lindbladian_apply(const struct MsLindbladian *l,
                                   const double *x,
                                   double *out,
                                   size_t len);

/*
 Entropy production of jump `jump` (ordered X, Y, Z per qubit) at a full-rank state.

 # Safety
 `l` must be a live handle, `rho` must hold `len` doubles and `out` be valid.
 */
enum MsStatus ms_entropy_production(const struct MsLindbladian *l,
                                    size_t jump,
                                    const double *rho,
                                    size_t len,
                                    double *out);

/*
 Fisher information of jump `jump` with `s_nodes` Gauss-Legendre nodes (0 selects 64).

 # Safety
 `l` must be a live handle, `rho` must hold `len` doubles and `out` be valid.
 */
enum MsStatus ms_fisher_information(const struct MsLindbladian *l,
                                    size_t jump,
                                    const double *rho,
                                    size_t len,
                                    size_t s_nodes,
                                    double *out);

/*
 Runs one experiment config and returns the result record as a JSON string to be
 released with `ms_string_free`. Returns `GateFailed` (with the record) when a gate fails.

 # Safety
 `config` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MsStatus ms_run_config_json(const char *config, bool strict, char **out);

/*
 # Safety
 `s` must be null or a string returned by this library and not yet freed.
 */
void ms_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METASTAB_H */
