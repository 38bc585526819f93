#ifndef EAFE_OCP_H
#define EAFE_OCP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EafeDiagonal {
  EAFE_DIAGONAL_LOWER_LEFT_UPPER_RIGHT = 0,
  EAFE_DIAGONAL_UPPER_LEFT_LOWER_RIGHT = 1,
} EafeDiagonal;

typedef enum EafeExample {
  EAFE_EXAMPLE_BOUNDARY_LAYER = 0,
  EAFE_EXAMPLE_INTERIOR_LAYER = 1,
  EAFE_EXAMPLE_SMOOTH = 2,
} EafeExample;

typedef enum EafeField {
  EAFE_FIELD_ADJOINT = 0,
  EAFE_FIELD_STATE = 1,
  EAFE_FIELD_CONTROL = 2,
} EafeField;

typedef enum EafeScheme {
  EAFE_SCHEME_EAFE = 0,
  EAFE_SCHEME_GALERKIN = 1,
} EafeScheme;

typedef enum EafeStatus {
  EAFE_STATUS_OK = 0,
  EAFE_STATUS_NULL_POINTER = 1,
  EAFE_STATUS_INVALID_ARGUMENT = 2,
  EAFE_STATUS_CAPACITY = 3,
  EAFE_STATUS_GEOMETRY = 4,
  EAFE_STATUS_SINGULAR = 5,
  EAFE_STATUS_CERTIFICATION = 6,
  EAFE_STATUS_COEFFICIENT = 7,
  EAFE_STATUS_PRECONDITION = 8,
  EAFE_STATUS_BUFFER_TOO_SMALL = 9,
  EAFE_STATUS_IO = 10,
  EAFE_STATUS_PANIC = 11,
  EAFE_STATUS_INTERNAL = 12,
} EafeStatus;

/**
 * Opaque triangulation of the unit square.
 */
typedef struct EafeMesh EafeMesh;

/**
 * Opaque discrete optimality pair with recovered control.
 */
typedef struct EafeSolution EafeSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t eafe_last_error_message(char *buf, size_t len);

/**
 * Evaluates the Bernoulli function `x / (e^x - 1)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EafeStatus eafe_bernoulli(double x, double *out);

/**
 * Builds the level-`level` unit-square mesh with `2^level` segments per side.
 *
 * # Safety
 * `out` must be a valid pointer; the handle must be released with
 * [`eafe_mesh_free`].
 */
enum EafeStatus eafe_mesh_new(uint32_t level, enum EafeDiagonal diagonal, struct EafeMesh **out);

/**
 * # Safety
 * `mesh` must be null or a handle from [`eafe_mesh_new`] not yet freed.
 */
void eafe_mesh_free(struct EafeMesh *mesh);

/**
 * # Safety
 * `mesh` must be a live handle and the out pointers valid.
 */
enum EafeStatus eafe_mesh_counts(const struct EafeMesh *mesh,
                                 size_t *num_vertices,
                                 size_t *num_triangles);

/**
 * Copies vertex coordinates as interleaved `x, y` pairs; `len` counts doubles.
 *
 * # Safety
 * `mesh` must be a live handle and `out` must hold `len` doubles.
 */
enum EafeStatus eafe_mesh_vertices(const struct EafeMesh *mesh, double *out, size_t len);

/**
 * Solves the desired-state problem with constant coefficients and constant
 * desired state `y_d`, homogeneous Dirichlet data and lumped reaction.
 *
 * # Safety
 * `mesh` must be a live handle and `out` valid; release the result with
 * [`eafe_solution_free`].
 */
enum EafeStatus eafe_solve_desired_state(const struct EafeMesh *mesh,
                                         double eps,
                                         double zeta_x,
                                         double zeta_y,
                                         double gamma,
                                         double beta,
                                         double y_d,
                                         enum EafeScheme s,
                                         struct EafeSolution **out);

/**
 * Solves one of the manufactured examples with exact Dirichlet traces.
 *
 * # Safety
 * As for [`eafe_solve_desired_state`].
 */
enum EafeStatus eafe_solve_example(const struct EafeMesh *mesh,
                                   enum EafeExample example,
                                   double eps,
                                   enum EafeScheme s,
                                   struct EafeSolution **out);

/**
 * # Safety
 * `sol` must be null or a live solution handle.
 */
void eafe_solution_free(struct EafeSolution *sol);

/**
 * Reports the vertex count and certified relative residual of a solve.
 *
 * # Safety
 * `sol` must be a live handle and the out pointers valid.
 */
enum EafeStatus eafe_solution_info(const struct EafeSolution *sol, size_t *len, double *residual);

/**
 * Copies one nodal field into `out`, which must hold `len` doubles.
 *
 * # Safety
 * `sol` must be a live handle and `out` must hold `len` doubles.
 */
enum EafeStatus eafe_solution_field(const struct EafeSolution *sol,
                                    enum EafeField field,
                                    double *out,
                                    size_t len);

/**
 * Checks the desired-state bounds of a constant-`y_d` solution; the sign
 * branch follows the sign of `y_d`.
 *
 * # Safety
 * `mesh` and `sol` must be live handles from the same level and the out
 * pointers valid.
 */
enum EafeStatus eafe_check_bounds(const struct EafeMesh *mesh,
                                  const struct EafeSolution *sol,
                                  double y_d,
                                  bool *ok,
                                  double *max_violation);

/**
 * Checks the M-matrix property of the interior operator for constant
 * coefficients.
 *
 * # Safety
 * `mesh` must be a live handle and `passed` valid.
 */
enum EafeStatus eafe_certify_m_matrix(const struct EafeMesh *mesh,
                                      double eps,
                                      double zeta_x,
                                      double zeta_y,
                                      double gamma,
                                      enum EafeScheme s,
                                      bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EAFE_OCP_H */
