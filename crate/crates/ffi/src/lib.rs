//! C interface to the `otgame` solver.
//!
//! A game lives behind an opaque `OtgProblem` handle created by one of the
//! `otg_problem_new*` constructors and released with `otg_problem_free`.
//! Every fallible function returns an `OtgStatus`; on failure a message is
//! available from `otg_last_error` on the same thread. Arrays are caller
//! owned and must hold `n` (or `n * n`, row-major) doubles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use otgame::entropic_ot::{regularized_lower_value, SinkhornOptions};
use otgame::solver::{adversary_densities, evaluate, minimize, objective, upper_value_t0};
use otgame::space::{indicator_cost, power_cost};
use otgame::{AttackProfile, CostMatrix, CostPair, DiscreteSpace, Error, LossPair, Problem, SolverOptions};

pub const OTG_LOSS_LOGISTIC: c_int = 0;
pub const OTG_LOSS_HINGE: c_int = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnattainedMinimum = 3,
    DegenerateKernel = 4,
    Infeasible = 5,
    Convergence = 6,
    Panic = 7,
}

/// Opaque game handle.
pub struct OtgProblem {
    inner: Problem,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtgSolveOptions {
    pub tol_grad: f64,
    pub max_iter: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OtgReport {
    pub value_eps: f64,
    pub upper_t0: f64,
    pub lower_unreg: f64,
    pub dual_eps: f64,
    pub gap_eps: f64,
    pub gap_unreg: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Nonzero when a one-sided hinge derivative was used.
    pub used_one_sided: c_int,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(OtgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) => OtgStatus::InvalidArgument,
            Error::UnattainedMinimum(_) => OtgStatus::UnattainedMinimum,
            Error::DegenerateKernel { .. } => OtgStatus::DegenerateKernel,
            Error::Infeasible(_) => OtgStatus::Infeasible,
            Error::Convergence { .. } => OtgStatus::Convergence,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(OtgStatus::NullPointer, format!("`{name}` is NULL"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> OtgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => OtgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OtgStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(p: *const OtgProblem) -> Result<&'a Problem, Failure> {
    p.as_ref().map(|h| &h.inner).ok_or_else(|| null("problem"))
}

fn loss_from_code(code: c_int) -> Result<LossPair, Failure> {
    match code {
        OTG_LOSS_LOGISTIC => Ok(LossPair::Logistic),
        OTG_LOSS_HINGE => Ok(LossPair::Hinge),
        other => Err(Failure(
            OtgStatus::InvalidArgument,
            format!("unknown loss code {other}"),
        )),
    }
}

unsafe fn publish(problem: Problem, out: *mut *mut OtgProblem) {
    *out = Box::into_raw(Box::new(OtgProblem { inner: problem }));
}

unsafe fn torus_problem(
    n: usize,
    mu1: *const f64,
    mum1: *const f64,
    loss: c_int,
    eps: f64,
    out: *mut *mut OtgProblem,
    cost: impl FnOnce(&DiscreteSpace) -> otgame::Result<CostMatrix>,
) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = ptr::null_mut();
    let mu1 = input(mu1, n, "mu1")?.to_vec();
    let mum1 = input(mum1, n, "mum1")?.to_vec();
    let losses = loss_from_code(loss)?;
    let space = DiscreteSpace::torus(n)?;
    let costs = CostPair::symmetric(cost(&space)?);
    publish(Problem::new(space, costs, losses, mu1, mum1, eps)?, out);
    Ok(())
}

/// Uniform torus of `n` points with `c(x, z) = d(x, z)^r` for both classes.
///
/// # Safety
/// `mu1`, `mum1` must point to `n` doubles, `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn otg_problem_new_torus_power(
    n: usize,
    mu1: *const f64,
    mum1: *const f64,
    loss: c_int,
    r: f64,
    eps: f64,
    out: *mut *mut OtgProblem,
) -> OtgStatus {
    guard(|| torus_problem(n, mu1, mum1, loss, eps, out, |s| power_cost(s, r)))
}

/// Uniform torus with `c(x, z) = level · 1[d(x, z) > threshold]`; pass
/// `INFINITY` as `level` for a hard budget.
///
/// # Safety
/// As for `otg_problem_new_torus_power`.
#[no_mangle]
pub unsafe extern "C" fn otg_problem_new_torus_indicator(
    n: usize,
    mu1: *const f64,
    mum1: *const f64,
    loss: c_int,
    threshold: f64,
    level: f64,
    eps: f64,
    out: *mut *mut OtgProblem,
) -> OtgStatus {
    guard(|| torus_problem(n, mu1, mum1, loss, eps, out, |s| indicator_cost(s, threshold, level)))
}

/// General finite space: `points` and `m` hold `n` doubles, `metric`, `c1`
/// and `cm1` hold `n * n`. `cm1` may be NULL to reuse `c1`.
///
/// # Safety
/// Every non-NULL pointer must reference the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn otg_problem_new(
    n: usize,
    points: *const f64,
    metric: *const f64,
    m: *const f64,
    c1: *const f64,
    cm1: *const f64,
    mu1: *const f64,
    mum1: *const f64,
    loss: c_int,
    eps: f64,
    out: *mut *mut OtgProblem,
) -> OtgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let nn = n
            .checked_mul(n)
            .ok_or_else(|| Failure(OtgStatus::InvalidArgument, format!("n = {n} is too large")))?;
        let space = DiscreteSpace::from_metric(
            input(points, n, "points")?.to_vec(),
            input(metric, nn, "metric")?.to_vec(),
            input(m, n, "m")?.to_vec(),
        )?;
        let c1 = CostMatrix::from_row_major(n, input(c1, nn, "c1")?.to_vec())?;
        let costs = if cm1.is_null() {
            CostPair::symmetric(c1)
        } else {
            CostPair::new(c1, CostMatrix::from_row_major(n, input(cm1, nn, "cm1")?.to_vec())?)?
        };
        let problem = Problem::new(
            space,
            costs,
            loss_from_code(loss)?,
            input(mu1, n, "mu1")?.to_vec(),
            input(mum1, n, "mum1")?.to_vec(),
            eps,
        )?;
        publish(problem, out);
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `problem` must come from an `otg_problem_new*` call and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn otg_problem_free(problem: *mut OtgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of grid points, 0 for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn otg_problem_len(problem: *const OtgProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.len())
}

/// Changes the regularization of an existing game.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn otg_problem_set_eps(problem: *mut OtgProblem, eps: f64) -> OtgStatus {
    guard(|| {
        let p = problem.as_mut().ok_or_else(|| null("problem"))?;
        p.inner = p.inner.with_eps(eps)?;
        Ok(())
    })
}

/// `T_ε(h)`.
///
/// # Safety
/// `h` points to `n` doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn otg_objective(problem: *const OtgProblem, h: *const f64, out: *mut f64) -> OtgStatus {
    guard(|| {
        let p = handle(problem)?;
        let h = input(h, p.len(), "h")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = objective(h, p)?;
        Ok(())
    })
}

/// `T_ε(h)` and its gradient. `value` may be NULL.
///
/// # Safety
/// `h` and `grad` point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn otg_gradient(
    problem: *const OtgProblem,
    h: *const f64,
    grad: *mut f64,
    value: *mut f64,
) -> OtgStatus {
    guard(|| {
        let p = handle(problem)?;
        let h = input(h, p.len(), "h")?;
        let grad = output(grad, p.len(), "grad")?;
        let eval = evaluate(h, p)?;
        grad.copy_from_slice(&eval.gradient);
        if let Some(v) = value.as_mut() {
            *v = eval.value;
        }
        Ok(())
    })
}

/// `T₀(h)`, the unregularized upper value at `h`.
///
/// # Safety
/// `h` points to `n` doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn otg_upper_value_t0(problem: *const OtgProblem, h: *const f64, out: *mut f64) -> OtgStatus {
    guard(|| {
        let p = handle(problem)?;
        let h = input(h, p.len(), "h")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = upper_value_t0(h, p)?;
        Ok(())
    })
}

/// Entropic best-response densities (w.r.t. the reference measure) at `h`.
///
/// # Safety
/// `h`, `nu1`, `num1` point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn otg_adversary_densities(
    problem: *const OtgProblem,
    h: *const f64,
    nu1: *mut f64,
    num1: *mut f64,
) -> OtgStatus {
    guard(|| {
        let p = handle(problem)?;
        let h = input(h, p.len(), "h")?;
        let nu1 = output(nu1, p.len(), "nu1")?;
        let num1 = output(num1, p.len(), "num1")?;
        let prof = adversary_densities(h, p)?;
        nu1.copy_from_slice(&prof.nu1);
        num1.copy_from_slice(&prof.num1);
        Ok(())
    })
}

/// Regularized lower value of the attack with densities `nu1`, `num1`,
/// computed by Sinkhorn with the given tolerance and iteration cap.
///
/// # Safety
/// `nu1`, `num1` point to `n` doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn otg_regularized_lower_value(
    problem: *const OtgProblem,
    nu1: *const f64,
    num1: *const f64,
    sinkhorn_tol: f64,
    sinkhorn_max_iter: usize,
    out: *mut f64,
) -> OtgStatus {
    guard(|| {
        let p = handle(problem)?;
        let prof = AttackProfile::from_densities(
            input(nu1, p.len(), "nu1")?.to_vec(),
            input(num1, p.len(), "num1")?.to_vec(),
        );
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let opts = SinkhornOptions {
            tol: sinkhorn_tol,
            max_iter: sinkhorn_max_iter,
        };
        *out = regularized_lower_value(&prof, p, opts)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn otg_solve_options_default() -> OtgSolveOptions {
    let d = SolverOptions::default();
    OtgSolveOptions {
        tol_grad: d.tol_grad,
        max_iter: d.max_iter,
        sinkhorn_tol: d.sinkhorn.tol,
        sinkhorn_max_iter: d.sinkhorn.max_iter,
    }
}

/// Minimizes `T_ε` from `h = 0` and certifies the result. `options` may be
/// NULL for the defaults, `report` may be NULL. When the descent stalls
/// the status is `OTG_STATUS_CONVERGENCE` and `h` holds the last iterate.
///
/// # Safety
/// `h` points to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn otg_solve(
    problem: *const OtgProblem,
    options: *const OtgSolveOptions,
    h: *mut f64,
    report: *mut OtgReport,
) -> OtgStatus {
    guard(|| {
        let p = handle(problem)?;
        let h = output(h, p.len(), "h")?;
        let o = options.as_ref().copied().unwrap_or_else(|| otg_solve_options_default());
        let opts = SolverOptions {
            tol_grad: o.tol_grad,
            max_iter: o.max_iter,
            sinkhorn: SinkhornOptions {
                tol: o.sinkhorn_tol,
                max_iter: o.sinkhorn_max_iter,
            },
            ..SolverOptions::default()
        };
        match minimize(p, &opts) {
            Ok((classifier, r)) => {
                h.copy_from_slice(&classifier.h);
                if let Some(out) = report.as_mut() {
                    *out = OtgReport {
                        value_eps: r.value_eps,
                        upper_t0: r.upper_t0,
                        lower_unreg: r.lower_unreg,
                        dual_eps: r.dual_eps,
                        gap_eps: r.gap_eps,
                        gap_unreg: r.gap_unreg,
                        iterations: r.iterations,
                        grad_norm: r.grad_norm,
                        used_one_sided: c_int::from(r.used_one_sided),
                    };
                }
                Ok(())
            }
            Err(e) => {
                if let Error::Convergence { last: Some(last), .. } = &e {
                    if last.len() == h.len() {
                        h.copy_from_slice(last);
                    }
                }
                Err(e.into())
            }
        }
    })
}

/// Message for the most recent failure on this thread, or NULL. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn otg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
