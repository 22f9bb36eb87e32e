#ifndef TRAPFIELD_H
#define TRAPFIELD_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum TfStatus {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_POINTER = 1,
  TF_STATUS_INVALID_ARGUMENT = 2,
  TF_STATUS_NUMERICAL = 3,
  TF_STATUS_STATE_SPACE_TOO_LARGE = 4,
  TF_STATUS_BUFFER_TOO_SMALL = 5,
  TF_STATUS_PANIC = 6,
  TF_STATUS_OTHER = 7,
} TfStatus;

/**
 * Opaque trap environment.
 */
typedef struct TfEnvironment TfEnvironment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *tf_last_error_message(void);

/**
 * Samples a trap environment on the torus `{-L..L}^d` with tail exponent
 * `beta`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TfStatus tf_environment_new(size_t d,
                                 size_t half_width,
                                 double beta,
                                 uint64_t seed,
                                 struct TfEnvironment **out);

/**
 * Builds an environment on the torus `{-L..L}^d` from explicit depths.
 *
 * # Safety
 * `alpha` must point to `len` readable values and `out` must be valid for
 * writing one pointer.
 */
enum TfStatus tf_environment_from_alpha(size_t d,
                                        size_t half_width,
                                        double beta,
                                        const uint64_t *alpha,
                                        size_t len,
                                        struct TfEnvironment **out);

/**
 * Releases an environment. NULL is ignored.
 *
 * # Safety
 * `env` must come from this library and must not be used afterwards.
 */
void tf_environment_free(struct TfEnvironment *env);

/**
 * Number of lattice sites.
 *
 * # Safety
 * `env` must be a live handle and `out` valid for writing.
 */
enum TfStatus tf_environment_site_count(const struct TfEnvironment *env, size_t *out);

/**
 * Copies the trap depths into `buf`, which must hold at least the site
 * count.
 *
 * # Safety
 * `env` must be a live handle and `buf` valid for writing `len` values.
 */
enum TfStatus tf_environment_copy_alpha(const struct TfEnvironment *env, uint64_t *buf, size_t len);

/**
 * Time scale `theta_n`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum TfStatus tf_theta_n(double n, size_t d, double beta, double *out);

/**
 * `E_beta(z)` for `0 < beta <= 1`, `z <= 0`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum TfStatus tf_mittag_leffler(double beta, double z, double *out);

/**
 * Checks the one-particle duality relation at site `x` and time `t` for the
 * configuration `eta` on a small environment. Writes both sides and whether
 * they agree within tolerance.
 *
 * # Safety
 * `env` must be a live handle, `eta` readable for `len` values and the
 * out-pointers valid for writing.
 */
enum TfStatus tf_duality_verify_one(const struct TfEnvironment *env,
                                    double a,
                                    const uint64_t *eta,
                                    size_t len,
                                    size_t x,
                                    double t,
                                    double *lhs,
                                    double *rhs,
                                    bool *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAPFIELD_H */
