//! Entropic optimal transport with reference measure `μ ⊗ m`, solved by
//! alternating log-domain scaling of the Schrödinger potentials.
//!
//! The optimal plan has the form
//! `γ(x,z) = μ(x) m(z) exp((f(x) + g(z) − c(x,z)) / ε)` with
//! `f = −g^{[ε,c,m]}`, and the value satisfies
//! `T^{ε,m}_c(μ,ν) = ∫ g dν − ∫ g^{[ε,c,m]} dμ`.

use crate::error::{invalid, Error, Result};
use crate::problem::{AttackProfile, Problem, TransportPlan};
use crate::space::{check_probability, CostMatrix};
use crate::transform::{check_eps, soft_row};
use crate::Class;

const MARGINAL_INPUT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Sup-norm tolerance on the `ν` marginal after the `μ` projection.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EotResult {
    /// `⟨c, γ⟩ + ε H(γ | μ ⊗ m)` at the returned plan.
    pub value: f64,
    /// `∫ g dν + ∫ f dμ`, the entropic dual objective at the potentials.
    pub dual_value: f64,
    pub potential_f: Vec<f64>,
    pub potential_g: Vec<f64>,
    pub plan: TransportPlan,
    pub iterations: usize,
    pub marginal_err: f64,
}

/// Plain entry point: `mu` and `nu` are probability vectors, `m` the
/// reference weights, all of the same length as `cost`.
pub fn sinkhorn(
    mu: &[f64],
    nu: &[f64],
    cost: &CostMatrix,
    eps: f64,
    m: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EotResult> {
    sinkhorn_with_init(mu, nu, cost, eps, m, SinkhornOptions { tol, max_iter }, None)
}

/// Sinkhorn iterations started from the column potential `g0` (zeros when
/// absent).
pub fn sinkhorn_with_init(
    mu: &[f64],
    nu: &[f64],
    cost: &CostMatrix,
    eps: f64,
    m: &[f64],
    opts: SinkhornOptions,
    g0: Option<&[f64]>,
) -> Result<EotResult> {
    check_eps(eps)?;
    let n = cost.len();
    check_probability("mu", mu, n, MARGINAL_INPUT_TOL)?;
    check_probability("nu", nu, n, MARGINAL_INPUT_TOL)?;
    if m.len() != n || m.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid("reference measure must be strictly positive on every point"));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid(format!(
            "sinkhorn tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if let Some(g0) = g0 {
        if g0.len() != n || g0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial potential must be finite with one value per point"));
        }
    }
    check_reachability(mu, nu, cost)?;

    let inv_eps = 1.0 / eps;
    let log_m: Vec<f64> = m.iter().map(|w| w.ln()).collect();
    let log_mu: Vec<f64> = mu
        .iter()
        .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mu_support: Vec<usize> = (0..n).filter(|&x| mu[x] > 0.0).collect();

    // column-major copy of the cost restricted to the μ support
    let mut cost_t = vec![0.0; n * mu_support.len()];
    for (k, &x) in mu_support.iter().enumerate() {
        for z in 0..n {
            cost_t[z * mu_support.len() + k] = cost.get(x, z);
        }
    }
    let log_mu_s: Vec<f64> = mu_support.iter().map(|&x| log_mu[x]).collect();

    let mut g: Vec<f64> = (0..n)
        .map(|z| {
            if nu[z] > 0.0 {
                g0.map_or(0.0, |g0| g0[z])
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut f = vec![0.0; n];
    let mut f_s = vec![0.0; mu_support.len()];
    let mut row_terms = vec![0.0; n];
    let mut col_terms = vec![0.0; mu_support.len()];
    let mut col_lse = vec![0.0; n];

    let mut iterations = 0;
    let marginal_err = loop {
        // μ projection: f = −g^{[ε,c,m]}
        for (k, &x) in mu_support.iter().enumerate() {
            let row =
                soft_row(&g, cost.row(x), &log_m, inv_eps, &mut row_terms).ok_or(Error::DegenerateKernel { row: x })?;
            f[x] = -eps * row.lse;
            f_s[k] = f[x];
        }
        // column log-partitions: ln Σ_x μ(x) exp((f(x) − c(x,z))/ε)
        let mut err: f64 = 0.0;
        for z in 0..n {
            if nu[z] == 0.0 {
                continue;
            }
            let column = &cost_t[z * mu_support.len()..(z + 1) * mu_support.len()];
            let lse = soft_row(&f_s, column, &log_mu_s, inv_eps, &mut col_terms)
                .ok_or(Error::Infeasible(format!("column {z} is unreachable")))?
                .lse;
            col_lse[z] = lse;
            let fitted = (log_m[z] + g[z] * inv_eps + lse).exp();
            err = err.max((fitted - nu[z]).abs());
        }
        if err <= opts.tol {
            break err;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                method: "sinkhorn",
                iterations,
                residual: err,
                last: None,
            });
        }
        // ν projection
        for z in 0..n {
            if nu[z] > 0.0 {
                g[z] = eps * (nu[z].ln() - log_m[z] - col_lse[z]);
            }
        }
        iterations += 1;
    };

    let mut mass = vec![0.0; n * n];
    for &x in &mu_support {
        let row = &mut mass[x * n..(x + 1) * n];
        for z in 0..n {
            let c = cost.get(x, z);
            if nu[z] > 0.0 && c < f64::INFINITY {
                row[z] = (log_mu[x] + log_m[z] + (f[x] + g[z] - c) * inv_eps).exp();
            }
        }
    }
    let plan = TransportPlan::from_row_major(n, mass)?;
    let value = plan.cost(cost) + eps * plan.relative_entropy(mu, m);
    let dual_value: f64 = (0..n)
        .map(|z| if nu[z] > 0.0 { nu[z] * g[z] } else { 0.0 })
        .sum::<f64>()
        + mu_support.iter().map(|&x| mu[x] * f[x]).sum::<f64>();

    Ok(EotResult {
        value,
        dual_value,
        potential_f: f,
        potential_g: g,
        plan,
        iterations,
        marginal_err,
    })
}

/// Every point carrying `μ` mass must reach some `ν` point at finite cost and
/// vice versa.
fn check_reachability(mu: &[f64], nu: &[f64], cost: &CostMatrix) -> Result<()> {
    let n = cost.len();
    for x in (0..n).filter(|&x| mu[x] > 0.0) {
        if !(0..n).any(|z| nu[z] > 0.0 && cost.get(x, z) < f64::INFINITY) {
            return Err(Error::Infeasible(format!(
                "source point {x} cannot reach the target support"
            )));
        }
    }
    for z in (0..n).filter(|&z| nu[z] > 0.0) {
        if !(0..n).any(|x| mu[x] > 0.0 && cost.get(x, z) < f64::INFINITY) {
            return Err(Error::Infeasible(format!(
                "target point {z} is unreachable from the source support"
            )));
        }
    }
    Ok(())
}

/// Breakdown of the regularized lower value.
#[derive(Debug, Clone)]
pub struct RegularizedLowerValue {
    pub value: f64,
    /// `Σ_z Ψ(dν₁/dm, dν₋₁/dm)(z) m(z)`.
    pub risk: f64,
    pub transport: [EotResult; 2],
}

/// `−Σ_i T^{ε,m}_{c_i}(μ_i, ν_i) + ∫ Ψ(dν₁/dm, dν₋₁/dm) dm`, a lower bound
/// on the regularized game value that is tight at the optimal attack.
pub fn regularized_lower_value(profile: &AttackProfile, problem: &Problem, opts: SinkhornOptions) -> Result<f64> {
    regularized_lower_value_detail(profile, problem, opts).map(|r| r.value)
}

pub fn regularized_lower_value_detail(
    profile: &AttackProfile,
    problem: &Problem,
    opts: SinkhornOptions,
) -> Result<RegularizedLowerValue> {
    let n = problem.len();
    let m = problem.space().m();
    if profile.nu1.len() != n || profile.num1.len() != n {
        return Err(invalid("profile densities do not match the space"));
    }
    let mut risk = 0.0;
    for z in 0..n {
        risk += problem.losses().psi(profile.nu1[z], profile.num1[z])? * m[z];
    }
    let solve = |class: Class| {
        let nu = profile.masses(class, m);
        let hint = profile.potentials.as_ref().map(|p| &p[class.index()][..]);
        sinkhorn_with_init(
            problem.mu(class),
            &nu,
            problem.cost(class),
            problem.eps(),
            m,
            opts,
            hint,
        )
    };
    let t1 = solve(Class::Pos)?;
    let tm1 = solve(Class::Neg)?;
    Ok(RegularizedLowerValue {
        value: risk - t1.value - tm1.value,
        risk,
        transport: [t1, tm1],
    })
}

/// `∫ ψ^c dμ + ∫ ψ dν` with `ψ^c(x) = min_z c(x,z) − ψ(z)`: a lower bound on
/// the unregularized transport cost `T_c(μ, ν)` for every `ψ`.
pub fn kantorovich_dual_bound(psi: &[f64], mu: &[f64], nu: &[f64], cost: &CostMatrix) -> Result<f64> {
    let n = cost.len();
    if psi.len() != n || mu.len() != n || nu.len() != n {
        return Err(invalid("dual bound inputs must all match the cost size"));
    }
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(invalid("potential must be finite"));
    }
    let mut bound = 0.0;
    for x in (0..n).filter(|&x| mu[x] > 0.0) {
        let ctrans = cost
            .row(x)
            .iter()
            .zip(psi)
            .map(|(c, p)| c - p)
            .fold(f64::INFINITY, f64::min);
        bound += mu[x] * ctrans;
    }
    for z in (0..n).filter(|&z| nu[z] > 0.0) {
        bound += nu[z] * psi[z];
    }
    Ok(bound)
}
