#ifndef SOSRF_H
#define SOSRF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Return codes. The numeric values match the exit codes of the `sosrf`
 * binary where both exist.
 */
typedef enum SosrfStatus {
  SOSRF_STATUS_OK = 0,
  SOSRF_STATUS_INPUT_ERROR = 2,
  SOSRF_STATUS_NOT_PSD = 3,
  SOSRF_STATUS_NO_CERTIFICATE = 4,
  SOSRF_STATUS_INVALID_CERTIFICATE = 5,
  SOSRF_STATUS_NULL_POINTER = 6,
  SOSRF_STATUS_PANIC = 7,
} SosrfStatus;

/**
 * Sum-of-squares certificate.
 */
typedef struct SosrfCertificate SosrfCertificate;

/**
 * Diagonalization of a matrix together with its three relation residuals.
 */
typedef struct SosrfDiagonalization SosrfDiagonalization;

/**
 * Symmetric polynomial matrix.
 */
typedef struct SosrfMatrix SosrfMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into the library.
 */
const char *sosrf_last_error(void);

/**
 * Releases a string returned by one of the `*_to_json` functions.
 *
 * # Safety
 * `s` must come from this library or be null.
 */
void sosrf_string_free(char *s);

/**
 * Parses a matrix from `{"m":..,"n":..,"entries":[..]}`.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum SosrfStatus sosrf_matrix_from_json(const char *json, struct SosrfMatrix **out);

/**
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum SosrfStatus sosrf_matrix_to_json(const struct SosrfMatrix *m, char **out);

/**
 * # Safety
 * `m` must come from this library or be null, and is not used afterwards.
 */
void sosrf_matrix_free(struct SosrfMatrix *m);

/**
 * Diagonalizes `m` and computes the relation residuals.
 *
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum SosrfStatus sosrf_diagonalize(const struct SosrfMatrix *m, struct SosrfDiagonalization **out);

/**
 * Copies the three relation residuals into `out[0..3]`.
 *
 * # Safety
 * `d` must be a live handle; `out` must point to three writable doubles.
 */
enum SosrfStatus sosrf_diagonalization_residuals(const struct SosrfDiagonalization *d, double *out);

/**
 * # Safety
 * `d` must be a live handle; `out` must be writable.
 */
enum SosrfStatus sosrf_diagonalization_to_json(const struct SosrfDiagonalization *d, char **out);

/**
 * # Safety
 * `d` must come from this library or be null, and is not used afterwards.
 */
void sosrf_diagonalization_free(struct SosrfDiagonalization *d);

/**
 * Builds a certificate for `m` over `domain` ("rn", "rline", "halfline",
 * "interval:a:b", "strip:a:b"). `seed` drives the random starts of the
 * rank search.
 *
 * # Safety
 * `m` must be a live handle, `domain` a nul-terminated string and `out`
 * writable.
 */
enum SosrfStatus sosrf_certify(const struct SosrfMatrix *m,
                               const char *domain,
                               uint64_t seed,
                               struct SosrfCertificate **out);

/**
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum SosrfStatus sosrf_certificate_from_json(const char *json, struct SosrfCertificate **out);

/**
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
enum SosrfStatus sosrf_certificate_to_json(const struct SosrfCertificate *c, char **out);

/**
 * # Safety
 * `c` must come from this library or be null, and is not used afterwards.
 */
void sosrf_certificate_free(struct SosrfCertificate *c);

/**
 * Writes the relative residual of `c` against `m` to `residual`. A residual
 * above `tol` gives `SOSRF_STATUS_INVALID_CERTIFICATE`, with `residual`
 * still filled in.
 *
 * # Safety
 * `m` and `c` must be live handles; `residual` must be writable.
 */
enum SosrfStatus sosrf_verify(const struct SosrfMatrix *m,
                              const struct SosrfCertificate *c,
                              double tol,
                              double *residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOSRF_H */
