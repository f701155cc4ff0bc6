#ifndef OTGAME_H
#define OTGAME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define OTG_LOSS_LOGISTIC 0

#define OTG_LOSS_HINGE 1

typedef enum OtgStatus {
  OTG_STATUS_OK = 0,
  OTG_STATUS_NULL_POINTER = 1,
  OTG_STATUS_INVALID_ARGUMENT = 2,
  OTG_STATUS_UNATTAINED_MINIMUM = 3,
  OTG_STATUS_DEGENERATE_KERNEL = 4,
  OTG_STATUS_INFEASIBLE = 5,
  OTG_STATUS_CONVERGENCE = 6,
  OTG_STATUS_PANIC = 7,
} OtgStatus;

/**
 * Opaque game handle.
 */
typedef struct OtgProblem OtgProblem;

typedef struct OtgSolveOptions {
  double tol_grad;
  size_t max_iter;
  double sinkhorn_tol;
  size_t sinkhorn_max_iter;
} OtgSolveOptions;

typedef struct OtgReport {
  double value_eps;
  double upper_t0;
  double lower_unreg;
  double dual_eps;
  double gap_eps;
  double gap_unreg;
  size_t iterations;
  double grad_norm;
  /**
   * Nonzero when a one-sided hinge derivative was used.
   */
  int used_one_sided;
} OtgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Uniform torus of `n` points with `c(x, z) = d(x, z)^r` for both classes.
 *
 * # Safety
 * `mu1`, `mum1` must point to `n` doubles, `out` to writable storage.
 */
enum OtgStatus otg_problem_new_torus_power(size_t n,
                                           const double *mu1,
                                           const double *mum1,
                                           int loss,
                                           double r,
                                           double eps,
                                           struct OtgProblem **out);

/**
 * Uniform torus with `c(x, z) = level · 1[d(x, z) > threshold]`; pass
 * `INFINITY` as `level` for a hard budget.
 *
 * # Safety
 * As for `otg_problem_new_torus_power`.
 */
enum OtgStatus otg_problem_new_torus_indicator(size_t n,
                                               const double *mu1,
                                               const double *mum1,
                                               int loss,
                                               double threshold,
                                               double level,
                                               double eps,
                                               struct OtgProblem **out);

/**
 * General finite space: `points` and `m` hold `n` doubles, `metric`, `c1`
 * and `cm1` hold `n * n`. `cm1` may be NULL to reuse `c1`.
 *
 * # Safety
 * Every non-NULL pointer must reference the stated number of doubles.
 */
enum OtgStatus otg_problem_new(size_t n,
                               const double *points,
                               const double *metric,
                               const double *m,
                               const double *c1,
                               const double *cm1,
                               const double *mu1,
                               const double *mum1,
                               int loss,
                               double eps,
                               struct OtgProblem **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `problem` must come from an `otg_problem_new*` call and not be used
 * afterwards.
 */
void otg_problem_free(struct OtgProblem *problem);

/**
 * Number of grid points, 0 for NULL.
 *
 * # Safety
 * `problem` must be NULL or a live handle.
 */
size_t otg_problem_len(const struct OtgProblem *problem);

/**
 * Changes the regularization of an existing game.
 *
 * # Safety
 * `problem` must be a live handle.
 */
enum OtgStatus otg_problem_set_eps(struct OtgProblem *problem, double eps);

/**
 * `T_ε(h)`.
 *
 * # Safety
 * `h` points to `n` doubles, `out` to one.
 */
enum OtgStatus otg_objective(const struct OtgProblem *problem, const double *h, double *out);

/**
 * `T_ε(h)` and its gradient. `value` may be NULL.
 *
 * # Safety
 * `h` and `grad` point to `n` doubles.
 */
enum OtgStatus otg_gradient(const struct OtgProblem *problem,
                            const double *h,
                            double *grad,
                            double *value);

/**
 * `T₀(h)`, the unregularized upper value at `h`.
 *
 * # Safety
 * `h` points to `n` doubles, `out` to one.
 */
enum OtgStatus otg_upper_value_t0(const struct OtgProblem *problem, const double *h, double *out);

/**
 * Entropic best-response densities (w.r.t. the reference measure) at `h`.
 *
 * # Safety
 * `h`, `nu1`, `num1` point to `n` doubles.
 */
enum OtgStatus otg_adversary_densities(const struct OtgProblem *problem,
                                       const double *h,
                                       double *nu1,
                                       double *num1);

/**
 * Regularized lower value of the attack with densities `nu1`, `num1`,
 * computed by Sinkhorn with the given tolerance and iteration cap.
 *
 * # Safety
 * `nu1`, `num1` point to `n` doubles, `out` to one.
 */
enum OtgStatus otg_regularized_lower_value(const struct OtgProblem *problem,
                                           const double *nu1,
                                           const double *num1,
                                           double sinkhorn_tol,
                                           size_t sinkhorn_max_iter,
                                           double *out);

struct OtgSolveOptions otg_solve_options_default(void);

/**
 * Minimizes `T_ε` from `h = 0` and certifies the result. `options` may be
 * NULL for the defaults, `report` may be NULL. When the descent stalls
 * the status is `OTG_STATUS_CONVERGENCE` and `h` holds the last iterate.
 *
 * # Safety
 * `h` points to `n` writable doubles.
 */
enum OtgStatus otg_solve(const struct OtgProblem *problem,
                         const struct OtgSolveOptions *options,
                         double *h,
                         struct OtgReport *report);

/**
 * Message for the most recent failure on this thread, or NULL. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *otg_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTGAME_H */
