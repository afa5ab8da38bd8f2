#ifndef MAGFLOW_H
#define MAGFLOW_H

#include <stddef.h>
#include <stdint.h>

/*
 Status codes. Input and numerical failures use the same values as the
 command-line exit codes.
 */
typedef enum MagflowStatus {
  MAGFLOW_STATUS_OK = 0,
  MAGFLOW_STATUS_NULL_POINTER = 1,
  MAGFLOW_STATUS_INVALID_INPUT = 2,
  MAGFLOW_STATUS_NUMERICAL = 3,
  MAGFLOW_STATUS_PANIC = 4,
} MagflowStatus;

typedef enum MagflowMethod {
  MAGFLOW_METHOD_RK4 = 0,
  MAGFLOW_METHOD_RK45 = 1,
} MagflowMethod;

/*
 Opaque magnetic system.
 */
typedef struct MagflowSystem MagflowSystem;

/*
 Opaque sampled trajectory.
 */
typedef struct MagflowTrajectory MagflowTrajectory;

/*
 Integrator settings. `step` is the RK4 step or the initial RK45 step.
 */
typedef struct MagflowIntegrator {
  enum MagflowMethod method;
  double step;
  double rtol;
  double atol;
} MagflowIntegrator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buffer` (NUL
 terminated, truncated to `len`) and returns its full length in bytes.
 Passing a null buffer only queries the length.
 */
size_t magflow_last_error(char *buffer, size_t len);

/*
 Builds a system from `{"manifold": {...}, "magnetic": {...}}`, using the
 same names as scenario files.
 */
enum MagflowStatus magflow_system_from_json(const char *json, struct MagflowSystem **out);

/*
 Releases a system. Null is accepted.
 */
void magflow_system_free(struct MagflowSystem *system);

/*
 Chart dimension of the system, or 0 for null.
 */
size_t magflow_system_dim(const struct MagflowSystem *system);

/*
 Integrates from `(x, v)` for time `horizon` and stores the samples in a
 new trajectory handle. Leaving the chart is reported as a numerical
 failure and no handle is produced.
 */
enum MagflowStatus magflow_integrate(const struct MagflowSystem *system,
                                     const double *x,
                                     const double *v,
                                     size_t n,
                                     double horizon,
                                     const struct MagflowIntegrator *integrator,
                                     struct MagflowTrajectory **out);

void magflow_trajectory_free(struct MagflowTrajectory *trajectory);

/*
 Number of samples, or 0 for null.
 */
size_t magflow_trajectory_len(const struct MagflowTrajectory *trajectory);

/*
 Copies sample `index` into `t`, `x` and `v` (`n` doubles each).
 */
enum MagflowStatus magflow_trajectory_sample(const struct MagflowTrajectory *trajectory,
                                             size_t index,
                                             double *t,
                                             double *x,
                                             double *v);

/*
 Magnetic sectional curvature `Sec^s` of the plane spanned by `v` and `w`.
 */
enum MagflowStatus magflow_sectional(const struct MagflowSystem *system,
                                     double s,
                                     const double *x,
                                     const double *v,
                                     const double *w,
                                     size_t n,
                                     double *out);

/*
 `exp_x(u)` into `point` (`n` doubles) and, when `jacobian` is not null,
 its derivative in row-major order (`n * n` doubles).
 */
enum MagflowStatus magflow_dynamical_exp(const struct MagflowSystem *system,
                                         const double *x,
                                         const double *u,
                                         size_t n,
                                         const struct MagflowIntegrator *integrator,
                                         double *point,
                                         double *jacobian);

/*
 Finite-time Lyapunov spectrum of the orbit of `(x, v)`, written in
 descending order to `exponents` (`2 n` doubles).
 */
enum MagflowStatus magflow_lyapunov(const struct MagflowSystem *system,
                                    const double *x,
                                    const double *v,
                                    size_t n,
                                    double horizon,
                                    double interval,
                                    const struct MagflowIntegrator *integrator,
                                    double *exponents);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAGFLOW_H */
