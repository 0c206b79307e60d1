#ifndef SGAO_H
#define SGAO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgaoStatus {
  SGAO_STATUS_OK = 0,
  SGAO_STATUS_NULL_POINTER = 1,
  SGAO_STATUS_INVALID_ARGUMENT = 2,
  SGAO_STATUS_DIMENSION = 3,
  SGAO_STATUS_CONFIG = 4,
  SGAO_STATUS_IO = 5,
  SGAO_STATUS_CHECKPOINT = 6,
  SGAO_STATUS_DIVERGENCE = 7,
  SGAO_STATUS_PANIC = 8,
  SGAO_STATUS_INTERNAL = 9,
} SgaoStatus;

/**
 * Opaque generator handle.
 */
typedef struct SgaoGenerator SgaoGenerator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a success. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *sgao_last_error_message(void);

/**
 * Creates a randomly initialized generator. `config_json` may be null for the default
 * architecture; otherwise it is a JSON object with any of the configuration fields.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be writable.
 */
enum SgaoStatus sgao_generator_new(const char *config_json,
                                   uint64_t seed,
                                   struct SgaoGenerator **out);

/**
 * Loads the generator stored in a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SgaoStatus sgao_generator_load(const char *path, struct SgaoGenerator **out);

/**
 * Writes the generator to a checkpoint file with 32-bit storage.
 *
 * # Safety
 * `g` must come from this library; `path` must be a NUL-terminated string.
 */
enum SgaoStatus sgao_generator_save(const struct SgaoGenerator *g, const char *path);

/**
 * Releases a generator. Null is ignored.
 *
 * # Safety
 * `g` must be null or come from this library and not be used afterwards.
 */
void sgao_generator_free(struct SgaoGenerator *g);

/**
 * Latent dimension and image shape. Any output pointer may be null.
 *
 * # Safety
 * `g` must come from this library; non-null outputs must be writable.
 */
enum SgaoStatus sgao_generator_dims(const struct SgaoGenerator *g,
                                    size_t *latent_dim,
                                    size_t *width,
                                    size_t *height,
                                    size_t *channels);

/**
 * `Y = g(Z)`.
 *
 * # Safety
 * `z` must hold `z_len` values and `out` must have room for `out_len`.
 */
enum SgaoStatus sgao_generator_forward(const struct SgaoGenerator *g,
                                       const double *z,
                                       size_t z_len,
                                       double *out,
                                       size_t out_len);

/**
 * Unnormalized `log p(Y, Z)`.
 *
 * # Safety
 * Buffers must hold the stated lengths; `out` must be writable.
 */
enum SgaoStatus sgao_generator_log_joint(const struct SgaoGenerator *g,
                                         const double *z,
                                         size_t z_len,
                                         const double *y,
                                         size_t y_len,
                                         double *out);

/**
 * `∂/∂Z log p(Y, Z)`.
 *
 * # Safety
 * Buffers must hold the stated lengths.
 */
enum SgaoStatus sgao_generator_grad_z(const struct SgaoGenerator *g,
                                      const double *z,
                                      size_t z_len,
                                      const double *y,
                                      size_t y_len,
                                      double *grad,
                                      size_t grad_len);

/**
 * Langevin posterior inference of `Z` for image `y`. `z_init` may be null to start at
 * zero; `delta = 0` with `steps > 0` is allowed and returns the start point.
 *
 * # Safety
 * Buffers must hold the stated lengths; `z_init` may be null.
 */
enum SgaoStatus sgao_generator_infer(const struct SgaoGenerator *g,
                                     const double *y,
                                     size_t y_len,
                                     const double *z_init,
                                     size_t steps,
                                     double delta,
                                     uint64_t seed,
                                     double *z_out,
                                     size_t z_len);

/**
 * Parse graph of the forward pass at `z`, as canonical JSON. Free the string with
 * [`sgao_string_free`].
 *
 * # Safety
 * `z` must hold `z_len` values; `out_json` must be writable.
 */
enum SgaoStatus sgao_generator_parse_graph(const struct SgaoGenerator *g,
                                           const double *z,
                                           size_t z_len,
                                           char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void sgao_string_free(char *s);

/**
 * `tanh(Σⱼ sⱼ·Bⱼ)` over the surviving activations of feature map `layer` (1-based),
 * which equals `g(z)` up to rounding.
 *
 * # Safety
 * `z` must hold `z_len` values and `out` must have room for `out_len`.
 */
enum SgaoStatus sgao_generator_reconstruct_from_layer(const struct SgaoGenerator *g,
                                                      const double *z,
                                                      size_t z_len,
                                                      size_t layer,
                                                      double *out,
                                                      size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGAO_H */
