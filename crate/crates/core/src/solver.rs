//! The regularized classifier problem `min_h T_ε(h)` and the certificates
//! built around it.
//!
//! `T_ε(h) = Σ_i Σ_x μ_i(x) (l_i ∘ h)^{[ε,c_i,m]}(x)`. Its gradient at `z` is
//! `Σ_i l_i'(h(z)) ν_i(z)` where `ν_i` is the attack induced by `h` through
//! the row-normalized softmax kernel, so first-order optimality and the
//! adversary's best response are computed in the same pass.

use std::collections::VecDeque;

use crate::entropic_ot::{regularized_lower_value, SinkhornOptions};
use crate::error::{invalid, Error, Result};
use crate::losses::LossPair;
use crate::problem::{AttackProfile, Problem, TransportPlan};
use crate::transform::{row_argmax, soft_row, GridFunction};
use crate::Class;

/// Soft classifier values on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub h: GridFunction,
}

impl Classifier {
    pub fn new(h: Vec<f64>) -> Self {
        Self { h: h.into() }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            h: GridFunction::zeros(n),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.h.sup_norm()
    }

    /// `max_k |h(z_{k+1}) − h(z_k)| · N` around a uniform periodic grid.
    pub fn discrete_lipschitz(&self) -> f64 {
        let n = self.h.len();
        (0..n)
            .map(|k| (self.h[(k + 1) % n] - self.h[k]).abs())
            .fold(0.0, f64::max)
            * n as f64
    }
}

/// Everything one kernel pass over `h` produces.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: GridFunction,
    /// Point masses of the induced attacks `ν₁`, `ν₋₁`.
    pub attack_mass: [Vec<f64>; 2],
    /// A hinge kink was hit and a one-sided average derivative was used.
    pub used_one_sided: bool,
}

/// One pass over the softmax kernels of both classes. When `plans` is given,
/// the conditional kernel rows weighted by `μ_i` are written into it.
fn evaluate_inner(h: &[f64], problem: &Problem, mut plans: Option<&mut [Vec<f64>; 2]>) -> Result<Evaluation> {
    problem.check_classifier(h)?;
    let n = problem.len();
    let eps = problem.eps();
    let inv_eps = 1.0 / eps;
    let mut terms = vec![0.0; n];
    let mut value = 0.0;
    let mut attack_mass = [vec![0.0; n], vec![0.0; n]];
    let mut psi = vec![0.0; n];

    for class in Class::BOTH {
        for (p, &t) in psi.iter_mut().zip(h) {
            *p = problem.loss(class, t);
        }
        let mu = problem.mu(class);
        let cost = problem.cost(class);
        let mass = &mut attack_mass[class.index()];
        for x in 0..n {
            if mu[x] == 0.0 {
                continue;
            }
            let row = soft_row(&psi, cost.row(x), problem.log_m(), inv_eps, &mut terms)
                .ok_or(Error::DegenerateKernel { row: x })?;
            value += mu[x] * eps * row.lse;
            let scale = mu[x] / row.sum;
            match plans.as_deref_mut() {
                Some(plans) => {
                    let plan_row = &mut plans[class.index()][x * n..(x + 1) * n];
                    for ((m, p), &t) in mass.iter_mut().zip(plan_row).zip(&terms) {
                        *p = scale * t;
                        *m += *p;
                    }
                }
                None => {
                    for (m, &t) in mass.iter_mut().zip(&terms) {
                        *m += scale * t;
                    }
                }
            }
        }
    }

    let losses = problem.losses();
    let mut used_one_sided = false;
    let gradient = (0..n)
        .map(|z| {
            used_one_sided |= losses.at_kink(h[z]);
            losses.d_l1(h[z]) * attack_mass[0][z] + losses.d_lm1(h[z]) * attack_mass[1][z]
        })
        .collect::<Vec<_>>()
        .into();
    Ok(Evaluation {
        value,
        gradient,
        attack_mass,
        used_one_sided,
    })
}

/// `T_ε(h)` together with its gradient and the induced attack.
pub fn evaluate(h: &[f64], problem: &Problem) -> Result<Evaluation> {
    evaluate_inner(h, problem, None)
}

/// `T_ε(h)`.
pub fn objective(h: &[f64], problem: &Problem) -> Result<f64> {
    evaluate(h, problem).map(|e| e.value)
}

/// `∇T_ε(h)`.
pub fn gradient(h: &[f64], problem: &Problem) -> Result<GridFunction> {
    evaluate(h, problem).map(|e| e.gradient)
}

/// The adversary's entropic best response to `h`: densities w.r.t. `m`,
/// the couplings realizing them, and `l_i ∘ h` as Schrödinger potentials.
pub fn adversary_densities(h: &[f64], problem: &Problem) -> Result<AttackProfile> {
    let n = problem.len();
    let mut plans = [vec![0.0; n * n], vec![0.0; n * n]];
    let eval = evaluate_inner(h, problem, Some(&mut plans))?;
    Ok(profile_from_eval(h, problem, eval, Some(plans)))
}

fn profile_from_eval(h: &[f64], problem: &Problem, eval: Evaluation, plans: Option<[Vec<f64>; 2]>) -> AttackProfile {
    let n = problem.len();
    let m = problem.space().m();
    let [mass1, massm1] = eval.attack_mass;
    let density =
        |mass: Vec<f64>| -> GridFunction { mass.iter().zip(m).map(|(a, b)| a / b).collect::<Vec<_>>().into() };
    let potential =
        |class: Class| -> GridFunction { h.iter().map(|&t| problem.loss(class, t)).collect::<Vec<_>>().into() };
    AttackProfile {
        nu1: density(mass1),
        num1: density(massm1),
        plans: plans.map(|[p1, pm1]| {
            [
                TransportPlan::from_row_major(n, p1).expect("kernel rows are nonnegative"),
                TransportPlan::from_row_major(n, pm1).expect("kernel rows are nonnegative"),
            ]
        }),
        potentials: Some([potential(Class::Pos), potential(Class::Neg)]),
    }
}

/// `h̃(z) = argmin_t α₁(z) l₁(t) + α₋₁(z) l₋₁(t)` from the profile densities.
/// At a minimizer of `T_ε` with its induced profile, `h̃ = h`.
pub fn primal_dual_refine(profile: &AttackProfile, losses: &LossPair) -> Result<GridFunction> {
    profile
        .nu1
        .iter()
        .zip(profile.num1.iter())
        .enumerate()
        .map(|(z, (&a1, &am1))| {
            losses.pointwise_argmin(a1, am1).map_err(|e| match e {
                Error::UnattainedMinimum(_) => Error::UnattainedMinimum(format!("zero attack density at point {z}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Into::into)
}

/// `T₀(h) = Σ_i Σ_x μ_i(x) max_z {l_i(h(z)) − c_i(x,z)}`, an upper bound on
/// the game value for every `h`.
pub fn upper_value_t0(h: &[f64], problem: &Problem) -> Result<f64> {
    problem.check_classifier(h)?;
    let mut total = 0.0;
    let mut psi = vec![0.0; h.len()];
    for class in Class::BOTH {
        for (p, &t) in psi.iter_mut().zip(h) {
            *p = problem.loss(class, t);
        }
        let mu = problem.mu(class);
        let cost = problem.cost(class);
        for (x, &w) in mu.iter().enumerate() {
            if w > 0.0 {
                total += w * row_argmax(&psi, cost.row(x)).1;
            }
        }
    }
    Ok(total)
}

/// Hard best response `γ_i = (id, S_i)_# μ_i` with `S_i(x)` a row maximizer
/// of `l_i(h(z)) − c_i(x,z)`.
pub fn best_response_profile(h: &[f64], problem: &Problem) -> Result<AttackProfile> {
    problem.check_classifier(h)?;
    let n = problem.len();
    let m = problem.space().m();
    let mut plans = Vec::with_capacity(2);
    let mut densities = Vec::with_capacity(2);
    for class in Class::BOTH {
        let psi: Vec<f64> = h.iter().map(|&t| problem.loss(class, t)).collect();
        let cost = problem.cost(class);
        let target: Vec<usize> = (0..n).map(|x| row_argmax(&psi, cost.row(x)).0).collect();
        let plan = TransportPlan::from_map(problem.mu(class), &target);
        densities.push(
            plan.col_marginal()
                .iter()
                .zip(m)
                .map(|(a, b)| a / b)
                .collect::<Vec<_>>(),
        );
        plans.push(plan);
    }
    let pm1 = plans.pop().expect("two plans");
    let p1 = plans.pop().expect("two plans");
    let dm1 = densities.pop().expect("two densities");
    let d1 = densities.pop().expect("two densities");
    Ok(AttackProfile {
        nu1: d1.into(),
        num1: dm1.into(),
        plans: Some([p1, pm1]),
        potentials: None,
    })
}

const PLAN_TOL: f64 = 1e-8;

fn checked_plans<'a>(profile: &'a AttackProfile, problem: &Problem) -> Result<[&'a TransportPlan; 2]> {
    let plans = profile
        .plans
        .as_ref()
        .ok_or_else(|| invalid("profile carries no transport plans"))?;
    let m = problem.space().m();
    for class in Class::BOTH {
        let plan = &plans[class.index()];
        if plan.len() != problem.len() {
            return Err(invalid("plan size does not match the space"));
        }
        let rows = plan.row_marginal();
        if let Some(x) = (0..rows.len()).find(|&x| (rows[x] - problem.mu(class)[x]).abs() > PLAN_TOL) {
            return Err(invalid(format!(
                "{class:?} plan row marginal at {x} is {} but mu is {}",
                rows[x],
                problem.mu(class)[x]
            )));
        }
        let cols = plan.col_marginal();
        let nu = profile.masses(class, m);
        if let Some(z) = (0..cols.len()).find(|&z| (cols[z] - nu[z]).abs() > PLAN_TOL) {
            return Err(invalid(format!(
                "{class:?} plan column marginal at {z} is {} but nu is {}",
                cols[z], nu[z]
            )));
        }
    }
    Ok([&plans[0], &plans[1]])
}

/// `−Σ_i ⟨c_i, γ_i⟩ + Σ_z Φ(α₁(z)) ν̄(z)` for the profile's plans. Since
/// `⟨c_i, γ_i⟩ ≥ T_{c_i}(μ_i, ν_i)` this bounds the game value from below;
/// `−∞` when a plan moves mass along an infinite cost.
pub fn lower_bound_unreg(profile: &AttackProfile, problem: &Problem) -> Result<f64> {
    let plans = checked_plans(profile, problem)?;
    let m = problem.space().m();
    let transport: f64 = Class::BOTH
        .iter()
        .map(|&c| plans[c.index()].cost(problem.cost(c)))
        .sum();
    if transport == f64::INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let nu1 = profile.masses(Class::Pos, m);
    let num1 = profile.masses(Class::Neg, m);
    let mut risk = 0.0;
    for (&a, &b) in nu1.iter().zip(&num1) {
        // Φ(a/(a+b))·(a+b) = Ψ(a, b)
        risk += problem.losses().psi(a, b)?;
    }
    Ok(risk - transport)
}

/// `J(h, γ₁, γ₋₁) = Σ_i Σ_{x,z} γ_i(x,z) [l_i(h(z)) − c_i(x,z)]`.
pub fn payoff_j(h: &[f64], profile: &AttackProfile, problem: &Problem) -> Result<f64> {
    problem.check_classifier(h)?;
    let plans = checked_plans(profile, problem)?;
    let n = problem.len();
    let mut total = 0.0;
    for class in Class::BOTH {
        let plan = plans[class.index()];
        let cost = problem.cost(class);
        for x in 0..n {
            for (z, &g) in plan.row(x).iter().enumerate() {
                if g > 0.0 {
                    let c = cost.get(x, z);
                    if c == f64::INFINITY {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += g * (problem.loss(class, h[z]) - c);
                }
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Steepest descent with backtracking.
    GradientDescent,
    /// Limited-memory BFGS directions with the same backtracking rule.
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop once `max_z |∇T_ε(h)(z)| <= tol_grad`.
    pub tol_grad: f64,
    pub max_iter: usize,
    pub h0: Option<Vec<f64>>,
    pub method: Method,
    pub armijo: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub sinkhorn: SinkhornOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-9,
            max_iter: 50_000,
            h0: None,
            method: Method::Lbfgs { memory: 10 },
            armijo: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            sinkhorn: SinkhornOptions::default(),
        }
    }
}

/// Scalars describing a solved instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    /// `T_ε` at the returned classifier.
    pub value_eps: f64,
    /// `T₀` at the returned classifier.
    pub upper_t0: f64,
    /// Unregularized lower bound from the induced entropic plans.
    pub lower_unreg: f64,
    /// Regularized lower value at the induced attack.
    pub dual_eps: f64,
    pub gap_eps: f64,
    pub gap_unreg: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub used_one_sided: bool,
}

/// Raw optimizer output.
#[derive(Debug, Clone)]
pub struct Descent {
    pub classifier: Classifier,
    pub evaluation: Evaluation,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Two-loop recursion: `−H ∇` from the stored curvature pairs.
fn lbfgs_direction(grad: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `T_ε` without computing certificates.
pub fn descend(problem: &Problem, options: &SolverOptions) -> Result<Descent> {
    let n = problem.len();
    if !(options.tol_grad > 0.0) {
        return Err(invalid(format!("tol_grad must be positive, got {}", options.tol_grad)));
    }
    if !(options.armijo > 0.0 && options.armijo < 1.0) || !(options.backtrack > 0.0 && options.backtrack < 1.0) {
        return Err(invalid("line search constants must lie in (0, 1)"));
    }
    if !(options.initial_step > 0.0) {
        return Err(invalid("initial step must be positive"));
    }
    let mut h = match &options.h0 {
        Some(h0) => h0.clone(),
        None => vec![0.0; n],
    };
    let mut eval = evaluate(&h, problem)?;
    let memory = match options.method {
        Method::Lbfgs { memory } => memory,
        Method::GradientDescent => 0,
    };
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut iterations = 0;

    loop {
        let grad_norm = sup(&eval.gradient);
        if grad_norm <= options.tol_grad {
            return Ok(Descent {
                classifier: Classifier::new(h),
                evaluation: eval,
                iterations,
                grad_norm,
            });
        }
        if iterations >= options.max_iter {
            return Err(Error::Convergence {
                method: "descent",
                iterations,
                residual: grad_norm,
                last: Some(h),
            });
        }

        let mut direction = if pairs.is_empty() {
            eval.gradient.iter().map(|g| -g).collect()
        } else {
            lbfgs_direction(&eval.gradient, &pairs)
        };
        let mut slope = dot(&eval.gradient, &direction);
        if !(slope < 0.0) {
            pairs.clear();
            direction = eval.gradient.iter().map(|g| -g).collect();
            slope = dot(&eval.gradient, &direction);
        }

        let mut step = options.initial_step;
        let noise = 1e-15 * (1.0 + eval.value.abs());
        let mut trial = vec![0.0; n];
        let accepted = loop {
            for ((t, &hv), &d) in trial.iter_mut().zip(&h).zip(&direction) {
                *t = hv + step * d;
            }
            let next = evaluate(&trial, problem)?;
            let armijo = next.value <= eval.value + options.armijo * step * slope;
            // in the round-off regime accept non-increasing steps that shrink the gradient
            let flat = next.value <= eval.value + noise && sup(&next.gradient) < grad_norm;
            if armijo || flat {
                break Some(next);
            }
            step *= options.backtrack;
            if step < 1e-30 {
                break None;
            }
        };
        let Some(next) = accepted else {
            return Err(Error::Convergence {
                method: "descent (line search stalled)",
                iterations,
                residual: grad_norm,
                last: Some(h),
            });
        };

        if memory > 0 {
            let s: Vec<f64> = trial.iter().zip(&h).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = next
                .gradient
                .iter()
                .zip(eval.gradient.iter())
                .map(|(a, b)| a - b)
                .collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                if pairs.len() == memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
        }
        std::mem::swap(&mut h, &mut trial);
        eval = next;
        iterations += 1;
    }
}

/// Solves the regularized problem and certifies the result: entropic duality
/// gap through the regularized lower value, and the unregularized bracket
/// `lower_unreg <= value <= upper_t0`.
pub fn minimize(problem: &Problem, options: &SolverOptions) -> Result<(Classifier, SolveReport)> {
    let descent = descend(problem, options)?;
    let report = certify(problem, &descent, options.sinkhorn)?;
    Ok((descent.classifier, report))
}

/// Certificates for an already computed descent.
pub fn certify(problem: &Problem, descent: &Descent, sinkhorn: SinkhornOptions) -> Result<SolveReport> {
    let h = &descent.classifier.h;
    let profile = adversary_densities(h, problem)?;
    let upper_t0 = upper_value_t0(h, problem)?;
    let lower_unreg = lower_bound_unreg(&profile, problem)?;
    let dual_eps = regularized_lower_value(&profile, problem, sinkhorn)?;
    let value_eps = descent.evaluation.value;
    Ok(SolveReport {
        value_eps,
        upper_t0,
        lower_unreg,
        dual_eps,
        gap_eps: value_eps - dual_eps,
        gap_unreg: upper_t0 - lower_unreg,
        iterations: descent.iterations,
        grad_norm: descent.grad_norm,
        used_one_sided: descent.evaluation.used_one_sided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{power_cost, CostMatrix, CostPair, DiscreteSpace};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn symmetric(n: usize, eps: f64) -> Problem {
        let s = DiscreteSpace::torus(n).unwrap();
        let c = CostPair::symmetric(power_cost(&s, 1.0).unwrap());
        let w = vec![1.0 / n as f64; n];
        Problem::new(s, c, LossPair::Logistic, w.clone(), w, eps).unwrap()
    }

    fn halves(n: usize, eps: f64) -> Problem {
        let s = DiscreteSpace::torus(n).unwrap();
        let c = CostPair::symmetric(power_cost(&s, 1.0).unwrap());
        let half = n / 2;
        let mu1: Vec<f64> = (0..n)
            .map(|k| if k >= half { 1.0 / (n - half) as f64 } else { 0.0 })
            .collect();
        let mum1: Vec<f64> = (0..n).map(|k| if k < half { 1.0 / half as f64 } else { 0.0 }).collect();
        Problem::new(s, c, LossPair::Logistic, mu1, mum1, eps).unwrap()
    }

    fn free_cost(n: usize, eps: f64, mu1: Vec<f64>, mum1: Vec<f64>) -> Problem {
        let s = DiscreteSpace::torus(n).unwrap();
        Problem::new(
            s,
            CostPair::symmetric(CostMatrix::zero(n)),
            LossPair::Logistic,
            mu1,
            mum1,
            eps,
        )
        .unwrap()
    }

    fn ball(n: usize) -> CostMatrix {
        let mut data = vec![f64::INFINITY; n * n];
        for k in 0..n {
            data[k * n + k] = 0.0;
        }
        CostMatrix::from_row_major(n, data).unwrap()
    }

    #[test]
    fn free_cost_objective_at_zero_is_two_log_two() {
        let p = free_cost(5, 0.1, vec![0.2; 5], vec![0.1, 0.2, 0.3, 0.4, 0.0]);
        assert!((objective(&[0.0; 5], &p).unwrap() - 2.0 * LN_2).abs() < 1e-14);
        let sym = symmetric(20, 0.05);
        assert!(objective(&[0.0; 20], &sym).unwrap() <= 2.0 * LN_2 + 1e-15);
    }

    #[test]
    fn two_point_objective_matches_scalar_formula() {
        let s = DiscreteSpace::torus(2).unwrap();
        let c = CostPair::symmetric(power_cost(&s, 1.0).unwrap());
        let p = Problem::new(s, c, LossPair::Logistic, vec![1.0, 0.0], vec![0.0, 1.0], 0.1).unwrap();
        let h = [1.0, -1.0];
        let l1 = |t: f64| (1.0 + (-t).exp()).ln();
        let lm1 = |t: f64| (1.0 + t.exp()).ln();
        let eps = 0.1;
        // class +1 mass sits on point 0, class −1 mass on point 1, d = 0.5
        let t1 = eps * (0.5 * (l1(h[0]) / eps).exp() + 0.5 * ((l1(h[1]) - 0.5) / eps).exp()).ln();
        let tm1 = eps * (0.5 * ((lm1(h[0]) - 0.5) / eps).exp() + 0.5 * (lm1(h[1]) / eps).exp()).ln();
        assert!((objective(&h, &p).unwrap() - (t1 + tm1)).abs() < 1e-13);
    }

    #[test]
    fn symmetric_gradient_vanishes_at_zero() {
        let p = symmetric(30, 0.01);
        assert!(gradient(&[0.0; 30], &p).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn free_cost_gradient_matches_softmax_weights() {
        let n = 6;
        let mu1 = vec![0.1, 0.3, 0.0, 0.2, 0.2, 0.2];
        let mum1 = vec![0.5, 0.0, 0.5, 0.0, 0.0, 0.0];
        let eps = 0.2;
        let p = free_cost(n, eps, mu1, mum1);
        let h = [0.3, -1.2, 0.8, 2.0, -0.4, 0.0];
        let g = gradient(&h, &p).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let weights = |vals: Vec<f64>| {
            let e: Vec<f64> = vals.iter().map(|v| (v / eps).exp() / n as f64).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|v| v / total * n as f64).collect::<Vec<_>>()
        };
        let w1 = weights(h.iter().map(|&t| (1.0 + (-t).exp()).ln()).collect());
        let wm1 = weights(h.iter().map(|&t| (1.0 + t.exp()).ln()).collect());
        for z in 0..n {
            let expected = (-sig(-h[z]) * w1[z] + sig(h[z]) * wm1[z]) / n as f64;
            assert!((g[z] - expected).abs() < 1e-14, "{z}: {} vs {expected}", g[z]);
        }
    }

    #[test]
    fn densities_for_diagonal_kernel_equal_mu() {
        let n = 7;
        let s = DiscreteSpace::torus(n).unwrap();
        let mu1 = vec![0.1, 0.2, 0.0, 0.3, 0.1, 0.1, 0.2];
        let mum1 = vec![0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0];
        let p = Problem::new(
            s,
            CostPair::symmetric(ball(n)),
            LossPair::Logistic,
            mu1.clone(),
            mum1.clone(),
            0.05,
        )
        .unwrap();
        let prof = adversary_densities(&[0.4, -0.3, 1.0, 0.0, 2.0, -2.0, 0.1], &p).unwrap();
        for z in 0..n {
            assert!((prof.nu1[z] / n as f64 - mu1[z]).abs() < 1e-15);
            assert!((prof.num1[z] / n as f64 - mum1[z]).abs() < 1e-15);
        }
    }

    #[test]
    fn free_cost_densities_ignore_mu() {
        let n = 5;
        let eps = 0.3;
        let h = [0.5, -0.5, 1.5, 0.0, -2.0];
        let a = adversary_densities(&h, &free_cost(n, eps, vec![0.2; 5], vec![0.2; 5])).unwrap();
        let b = adversary_densities(
            &h,
            &free_cost(n, eps, vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5, 0.0]),
        )
        .unwrap();
        let e: Vec<f64> = h.iter().map(|&t| ((1.0 + (-t).exp()).ln() / eps).exp()).collect();
        let z: f64 = e.iter().sum::<f64>() / n as f64;
        for k in 0..n {
            assert!((a.nu1[k] - e[k] / z).abs() < 1e-12);
            assert!((a.nu1[k] - b.nu1[k]).abs() < 1e-12);
            assert!((a.num1[k] - b.num1[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_integrate_to_one_and_plans_are_feasible() {
        let p = halves(40, 0.02);
        let h: Vec<f64> = (0..40).map(|k| (k as f64 * 0.3).cos()).collect();
        let prof = adversary_densities(&h, &p).unwrap();
        for class in Class::BOTH {
            let total: f64 = prof.masses(class, p.space().m()).iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
        checked_plans(&prof, &p).unwrap();
    }

    #[test]
    fn refine_closed_form_and_symmetry() {
        let prof = AttackProfile::from_densities(vec![0.75, 0.5, 2.0], vec![0.25, 0.5, 0.1]);
        let refined = primal_dual_refine(&prof, &LossPair::Logistic).unwrap();
        for z in 0..3 {
            let closed = (prof.nu1[z] / prof.num1[z]).ln();
            assert!((refined[z] - closed).abs() < 1e-10);
        }
        let sym = symmetric(16, 0.05);
        let prof = adversary_densities(&[0.0; 16], &sym).unwrap();
        assert!(primal_dual_refine(&prof, sym.losses()).unwrap().sup_norm() < 1e-12);
        let zero = AttackProfile::from_densities(vec![1.0, 0.0], vec![1.0, 1.0]);
        assert!(matches!(
            primal_dual_refine(&zero, &LossPair::Logistic),
            Err(Error::UnattainedMinimum(_))
        ));
    }

    #[test]
    fn upper_value_examples() {
        let p = symmetric(12, 0.01);
        assert!((upper_value_t0(&[0.0; 12], &p).unwrap() - 2.0 * LN_2).abs() < 1e-14);
        // two-point enumeration
        let s = DiscreteSpace::torus(2).unwrap();
        let c = CostPair::symmetric(power_cost(&s, 1.0).unwrap());
        let p = Problem::new(s, c, LossPair::Logistic, vec![1.0, 0.0], vec![0.0, 1.0], 0.01).unwrap();
        let h = [0.2, -0.6];
        let l = LossPair::Logistic;
        let expected = l.l1(h[0]).max(l.l1(h[1]) - 0.5) + (l.lm1(h[0]) - 0.5).max(l.lm1(h[1]));
        assert!((upper_value_t0(&h, &p).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_examples() {
        let p = symmetric(10, 0.01);
        let identity = AttackProfile::identity(&p);
        assert!((lower_bound_unreg(&identity, &p).unwrap() - 2.0 * LN_2).abs() < 1e-14);

        let n = 4;
        let s = DiscreteSpace::torus(n).unwrap();
        let p = Problem::new(
            s,
            CostPair::symmetric(ball(n)),
            LossPair::Logistic,
            vec![0.25; 4],
            vec![0.25; 4],
            0.1,
        )
        .unwrap();
        let shifted = TransportPlan::from_map(&[0.25; 4], &[1, 2, 3, 0]);
        let prof = AttackProfile {
            nu1: vec![1.0; 4].into(),
            num1: vec![1.0; 4].into(),
            plans: Some([shifted.clone(), shifted]),
            potentials: None,
        };
        assert_eq!(lower_bound_unreg(&prof, &p).unwrap(), f64::NEG_INFINITY);

        let broken = AttackProfile {
            nu1: vec![1.0; 4].into(),
            num1: vec![1.0; 4].into(),
            plans: Some([
                TransportPlan::diagonal(&[0.5, 0.5, 0.0, 0.0]),
                TransportPlan::diagonal(&[0.25; 4]),
            ]),
            potentials: None,
        };
        assert!(lower_bound_unreg(&broken, &p).is_err());
    }

    #[test]
    fn payoff_examples() {
        let p = halves(16, 0.05);
        let h: Vec<f64> = (0..16).map(|k| (k as f64 * 0.7).sin()).collect();
        let identity = AttackProfile::identity(&p);
        let clean: f64 = Class::BOTH
            .iter()
            .map(|&c| p.mu(c).iter().zip(&h).map(|(w, &t)| w * p.loss(c, t)).sum::<f64>())
            .sum();
        assert!((payoff_j(&h, &identity, &p).unwrap() - clean).abs() < 1e-14);
        let best = best_response_profile(&h, &p).unwrap();
        let t0 = upper_value_t0(&h, &p).unwrap();
        assert!((payoff_j(&h, &best, &p).unwrap() - t0).abs() < 1e-10);
        let soft = adversary_densities(&h, &p).unwrap();
        assert!(payoff_j(&h, &soft, &p).unwrap() <= t0 + 1e-12);
    }

    #[test]
    fn minimize_symmetric_problem_stays_at_zero() {
        let p = symmetric(40, 1e-2);
        let (h, report) = minimize(&p, &SolverOptions::default()).unwrap();
        assert!(h.sup_norm() <= 1e-6);
        assert!(report.value_eps <= 2.0 * LN_2);
        assert!(report.lower_unreg <= report.upper_t0 + 1e-8);
        assert!(report.value_eps <= report.upper_t0 + 1e-10);
    }

    #[test]
    fn minimize_decreases_objective_from_h0() {
        let p = halves(30, 0.05);
        let h0: Vec<f64> = (0..30).map(|k| if k % 2 == 0 { 2.0 } else { -1.0 }).collect();
        let start = objective(&h0, &p).unwrap();
        let opts = SolverOptions {
            h0: Some(h0),
            ..Default::default()
        };
        let (h, report) = minimize(&p, &opts).unwrap();
        assert!(report.value_eps <= start);
        assert!(gradient(&h.h, &p).unwrap().sup_norm() <= 1e-9);
    }

    #[test]
    fn gradient_descent_method_converges_on_small_problem() {
        let p = halves(10, 0.2);
        let opts = SolverOptions {
            method: Method::GradientDescent,
            tol_grad: 1e-8,
            ..Default::default()
        };
        let (gd, _) = minimize(&p, &opts).unwrap();
        let (lb, _) = minimize(
            &p,
            &SolverOptions {
                tol_grad: 1e-10,
                ..Default::default()
            },
        )
        .unwrap();
        for z in 0..10 {
            assert!((gd.h[z] - lb.h[z]).abs() < 1e-4);
        }
    }

    #[test]
    fn iteration_cap_returns_last_iterate() {
        let p = halves(20, 0.01);
        let opts = SolverOptions {
            max_iter: 3,
            ..Default::default()
        };
        match minimize(&p, &opts) {
            Err(Error::Convergence {
                iterations,
                last: Some(h),
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(h.len(), 20);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn hinge_flags_one_sided_derivatives() {
        let s = DiscreteSpace::torus(8).unwrap();
        let c = CostPair::symmetric(power_cost(&s, 1.0).unwrap());
        let w = vec![0.125; 8];
        let p = Problem::new(s, c, LossPair::Hinge, w.clone(), w, 0.1).unwrap();
        assert!(!evaluate(&[0.0; 8], &p).unwrap().used_one_sided);
        let mut h = vec![0.0; 8];
        h[3] = 1.0;
        assert!(evaluate(&h, &p).unwrap().used_one_sided);
    }

    #[test]
    fn discrete_lipschitz_wraps() {
        let h = Classifier::new(vec![0.0, 0.1, 0.3, 0.0]);
        assert!((h.discrete_lipschitz() - 0.3 * 4.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn objective_is_convex_along_segments(
            a in proptest::collection::vec(-3.0f64..3.0, 12),
            b in proptest::collection::vec(-3.0f64..3.0, 12),
            lam in 0.0f64..=1.0,
        ) {
            let p = halves(12, 0.05);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
            let lhs = objective(&mid, &p).unwrap();
            let rhs = lam * objective(&a, &p).unwrap() + (1.0 - lam) * objective(&b, &p).unwrap();
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn gradient_is_loss_derivative_times_attack_mass(h in proptest::collection::vec(-3.0f64..3.0, 12)) {
            let p = halves(12, 0.03);
            let eval = evaluate(&h, &p).unwrap();
            let prof = adversary_densities(&h, &p).unwrap();
            let m = p.space().m();
            for z in 0..12 {
                let expected = p.losses().d_l1(h[z]) * prof.nu1[z] * m[z] + p.losses().d_lm1(h[z]) * prof.num1[z] * m[z];
                prop_assert!((eval.gradient[z] - expected).abs() <= 1e-10);
            }
        }

        #[test]
        fn weak_duality_and_softmax_domination(h in proptest::collection::vec(-3.0f64..3.0, 10), eps in 1e-3f64..0.5) {
            let p = halves(10, eps);
            let t_eps = objective(&h, &p).unwrap();
            let t0 = upper_value_t0(&h, &p).unwrap();
            prop_assert!(t_eps <= t0 + 1e-10);
            let prof = adversary_densities(&h, &p).unwrap();
            let lower = lower_bound_unreg(&prof, &p).unwrap();
            prop_assert!(lower <= t0 + 1e-8);
            for probe in [0.0, 0.5, -1.0] {
                let flat = vec![probe; 10];
                prop_assert!(lower <= upper_value_t0(&flat, &p).unwrap() + 1e-8);
            }
        }
    }
}
