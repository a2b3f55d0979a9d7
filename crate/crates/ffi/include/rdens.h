#ifndef RDENS_H
#define RDENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RdStatus {
  RD_STATUS_OK = 0,
  RD_STATUS_NULL_POINTER = 1,
  RD_STATUS_INVALID_ARGUMENT = 2,
  RD_STATUS_DIMENSION_MISMATCH = 3,
  RD_STATUS_GRID_MISMATCH = 4,
  RD_STATUS_NUMERICAL = 5,
  RD_STATUS_CONDITION = 6,
  RD_STATUS_IO = 7,
  RD_STATUS_PANIC = 8,
} RdStatus;

typedef enum RdKernelKind {
  RD_KERNEL_KIND_BROWNIAN = 0,
  /*
   Parameter: Hurst index.
   */
  RD_KERNEL_KIND_FRACTIONAL = 1,
  /*
   Parameter: pin time.
   */
  RD_KERNEL_KIND_BRIDGE = 2,
  RD_KERNEL_KIND_ZERO = 3,
} RdKernelKind;

/*
 Vector fields `V_0` (drift), `V_1..V_d`.
 */
typedef struct RdFields RdFields;

/*
 Solution path with its Jacobian flow.
 */
typedef struct RdFlow RdFlow;

/*
 Covariance model of a driving Gaussian process.
 */
typedef struct RdModel RdModel;

/*
 Step-2 rough path on a time grid.
 */
typedef struct RdRoughPath RdRoughPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *rd_version(void);

/*
 Copies the calling thread's last error message into `buf` (NUL
 terminated, truncated to `len`). Returns the full message length.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t rd_last_error_message(char *buf, size_t len);

/*
 I.i.d. `dim`-component model on `[0, horizon]`. `param` is the Hurst
 index or the pin time and is ignored for the other kernels.

 # Safety
 `out` must be a valid pointer.
 */
enum RdStatus rd_model_new(enum RdKernelKind kind,
                           double param,
                           size_t dim,
                           double horizon,
                           struct RdModel **out);

/*
 # Safety
 `model` must be null or a handle from [`rd_model_new`], not yet freed.
 */
void rd_model_free(struct RdModel *model);

/*
 Draws sample `index` of the stream `seed` on a uniform grid with
 `intervals` steps and lifts it.

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum RdStatus rd_sample_lift(const struct RdModel *model,
                             size_t intervals,
                             uint64_t seed,
                             uint64_t index,
                             struct RdRoughPath **out);

/*
 Lifts the piecewise-linear path through `points` samples: `times` has
 `points` entries, `values` is `points × dim` row-major.

 # Safety
 The arrays must hold the stated number of elements; `out` must be valid.
 */
enum RdStatus rd_rough_path_from_values(size_t points,
                                        size_t dim,
                                        const double *times,
                                        const double *values,
                                        struct RdRoughPath **out);

/*
 Number of grid points, or 0 for a null handle.

 # Safety
 `path` must be null or a live handle.
 */
size_t rd_rough_path_len(const struct RdRoughPath *path);

/*
 Path dimension, or 0 for a null handle.

 # Safety
 `path` must be null or a live handle.
 */
size_t rd_rough_path_dim(const struct RdRoughPath *path);

/*
 Element over `[0, t_index]`: `level1` receives `d` values, `level2`
 receives `d × d` values row-major.

 # Safety
 `path` must be a live handle; the output arrays must have room for the
 values.
 */
enum RdStatus rd_rough_path_element(const struct RdRoughPath *path,
                                    size_t index,
                                    double *level1,
                                    double *level2);

/*
 # Safety
 `path` must be null or a live handle.
 */
void rd_rough_path_free(struct RdRoughPath *path);

/*
 Affine fields `V_i(y) = A_i y + b_i` for `i = 0..=d`, drift first.
 `matrices` holds `(d + 1) · e · e` values (each row-major), `offsets`
 holds `(d + 1) · e` values.

 # Safety
 The arrays must hold the stated number of elements; `out` must be valid.
 */
enum RdStatus rd_fields_linear(size_t e,
                               size_t d,
                               const double *matrices,
                               const double *offsets,
                               struct RdFields **out);

/*
 The built-in elliptic planar system with bounded cubic terms and a drift.

 # Safety
 `out` must be a valid pointer.
 */
enum RdStatus rd_fields_cubic_example(struct RdFields **out);

/*
 Writes 1 to `spans` when `V_1(y0), ..., V_d(y0)` span the state space.

 # Safety
 `fields` must be a live handle, `y0` must hold `e` values.
 */
enum RdStatus rd_fields_elliptic(const struct RdFields *fields,
                                 const double *y0,
                                 size_t e,
                                 int *spans);

/*
 # Safety
 `fields` must be null or a live handle.
 */
void rd_fields_free(struct RdFields *fields);

/*
 Solves the RDE along `path` from `y0` (`e` values), with the Jacobian.

 # Safety
 Handles must be live, `y0` must hold `e` values, `out` must be valid.
 */
enum RdStatus rd_solve_flow(const struct RdRoughPath *path,
                            const struct RdFields *fields,
                            const double *y0,
                            size_t e,
                            struct RdFlow **out);

/*
 Number of grid points of the flow, or 0 for a null handle.

 # Safety
 `flow` must be null or a live handle.
 */
size_t rd_flow_len(const struct RdFlow *flow);

/*
 State `Y_{t_index}` into `out` (`e` values) and, when `jacobian` is not
 null, `J_{t_index←0}` into it (`e × e`, row-major).

 # Safety
 `flow` must be a live handle; output arrays must have room for the values.
 */
enum RdStatus rd_flow_state(const struct RdFlow *flow,
                            size_t index,
                            double *out,
                            size_t e,
                            double *jacobian);

/*
 # Safety
 `flow` must be null or a live handle.
 */
void rd_flow_free(struct RdFlow *flow);

/*
 Malliavin matrix of `Y_t` by the 2D Young route. `sigma` receives
 `e × e` values row-major; `lambda_min` and `nondegenerate` may be null.

 # Safety
 Handles must be live; `sigma` must have room for `e × e` values.
 */
enum RdStatus rd_malliavin(const struct RdFlow *flow,
                           const struct RdFields *fields,
                           const struct RdModel *model,
                           double t,
                           double *sigma,
                           size_t e,
                           double *lambda_min,
                           int *nondegenerate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDENS_H */
