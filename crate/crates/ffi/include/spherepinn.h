#ifndef SPHEREPINN_H
#define SPHEREPINN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_ARGUMENT = 2,
  SP_STATUS_DOMAIN = 3,
  SP_STATUS_INVALID_GEOMETRY = 4,
  SP_STATUS_SHAPE_MISMATCH = 5,
  SP_STATUS_INVALID_CONFIG = 6,
  SP_STATUS_TRAINING_ABORTED = 7,
  SP_STATUS_IO = 8,
  SP_STATUS_FORMAT = 9,
  SP_STATUS_PANIC = 10,
} SpStatus;

// Complex pressures at the capsules of a geometry, for `K` wavenumbers.
typedef struct SpField SpField;

// Capsule layout on a sphere.
typedef struct SpGeometry SpGeometry;

// Trained upsampling model.
typedef struct SpModel SpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sp_version(void);

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length
// excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t sp_last_error_message(char *buf, size_t len);

// 32-capsule reference layout. `rigid` selects a rigid sphere.
//
// # Safety
// `out` must be a valid pointer.
enum SpStatus sp_geometry_reference(double radius, bool rigid, struct SpGeometry **out);

// Geometry from `theta`/`phi` (radians) with uniform quadrature weights.
//
// # Safety
// `theta` and `phi` must hold `count` values; `out` must be valid.
enum SpStatus sp_geometry_new(double radius,
                              bool rigid,
                              const double *theta,
                              const double *phi,
                              size_t count,
                              struct SpGeometry **out);

// Reads a geometry text file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum SpStatus sp_geometry_load(const char *path, struct SpGeometry **out);

// Number of capsules, or 0 for a null handle.
//
// # Safety
// `geometry` must be null or a live handle.
size_t sp_geometry_len(const struct SpGeometry *geometry);

// Direction of capsule `index`.
//
// # Safety
// Handles and output pointers must be valid.
enum SpStatus sp_geometry_direction(const struct SpGeometry *geometry,
                                    size_t index,
                                    double *theta,
                                    double *phi);

// Maximin subset of `q` capsules. Writes the ascending indices into
// `indices` (room for `q` values) and the subset geometry into `out`.
//
// # Safety
// Handles and output pointers must be valid.
enum SpStatus sp_geometry_subset(const struct SpGeometry *geometry,
                                 size_t q,
                                 size_t *indices,
                                 struct SpGeometry **out);

// # Safety
// `geometry` must be null or a handle not yet freed.
void sp_geometry_free(struct SpGeometry *geometry);

// Field from row-major `Q x K` real and imaginary parts.
//
// # Safety
// `wavenumbers` must hold `k` values, `re` and `im` `Q * k` values.
enum SpStatus sp_field_new(const struct SpGeometry *geometry,
                           const double *wavenumbers,
                           size_t k,
                           const double *re,
                           const double *im,
                           struct SpField **out);

// Reads a field file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum SpStatus sp_field_load(const char *path, struct SpField **out);

// Writes a field file.
//
// # Safety
// `field` must be a live handle and `path` a NUL-terminated string.
enum SpStatus sp_field_save(const struct SpField *field, const char *path);

// Capsule and wavenumber counts.
//
// # Safety
// `field` must be a live handle; outputs must be valid.
enum SpStatus sp_field_dims(const struct SpField *field, size_t *capsules, size_t *bins);

// Copies the `Q x K` pressures into `re` and `im`.
//
// # Safety
// `re` and `im` must each have room for `Q * K` values.
enum SpStatus sp_field_values(const struct SpField *field, double *re, double *im);

// # Safety
// `field` must be null or a handle not yet freed.
void sp_field_free(struct SpField *field);

// Order-limited spherical-harmonics interpolation of `field` at the
// capsules of `targets`.
//
// # Safety
// Handles must be live; `out` must be valid.
enum SpStatus sp_baseline_upsample(const struct SpField *field,
                                   const struct SpGeometry *targets,
                                   struct SpField **out);

// Reads a model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum SpStatus sp_model_load(const char *path, struct SpModel **out);

// Number of wavenumbers the model predicts, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t sp_model_bin_count(const struct SpModel *model);

// Model prediction at the capsules of `targets`.
//
// # Safety
// Handles must be live; `out` must be valid.
enum SpStatus sp_model_predict(const struct SpModel *model,
                               const struct SpGeometry *targets,
                               struct SpField **out);

// # Safety
// `model` must be null or a handle not yet freed.
void sp_model_free(struct SpModel *model);

// Time-domain NMSE in dB between channel-major `channels x length` arrays.
//
// # Safety
// `estimate` and `reference` must hold `channels * length` values.
enum SpStatus sp_nmse_time(const double *estimate,
                           const double *reference,
                           size_t channels,
                           size_t length,
                           double *out_db);

// Complex spherical harmonic `Y_n^m(theta, phi)`.
//
// # Safety
// `re` and `im` must be valid.
enum SpStatus sp_sph_harm(size_t n, int64_t m, double theta, double phi, double *re, double *im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPHEREPINN_H */
