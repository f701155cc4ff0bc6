//! Problem instances, transport plans and adversary profiles.

use crate::error::{invalid, Result};
use crate::losses::LossPair;
use crate::space::{check_probability, CostMatrix, CostPair, DiscreteSpace};
use crate::transform::{check_eps, GridFunction};
use crate::Class;

/// Tolerance on the total mass of user supplied class measures.
const MEASURE_TOL: f64 = 1e-9;

/// A regularized adversarial classification game on a finite space.
#[derive(Debug, Clone)]
pub struct Problem {
    space: DiscreteSpace,
    costs: CostPair,
    losses: LossPair,
    mu1: Vec<f64>,
    mum1: Vec<f64>,
    eps: f64,
    log_m: Vec<f64>,
}

impl Problem {
    /// `mu1`, `mum1` are the class measures as point masses (probability
    /// vectors over the grid); they need not have full support.
    pub fn new(
        space: DiscreteSpace,
        costs: CostPair,
        losses: LossPair,
        mu1: Vec<f64>,
        mum1: Vec<f64>,
        eps: f64,
    ) -> Result<Self> {
        check_eps(eps)?;
        let n = space.len();
        if costs.c1.len() != n || costs.cm1.len() != n {
            return Err(invalid(format!(
                "costs are {}x{} but the space has {n} points",
                costs.c1.len(),
                costs.c1.len()
            )));
        }
        check_probability("mu1", &mu1, n, MEASURE_TOL)?;
        check_probability("mum1", &mum1, n, MEASURE_TOL)?;
        let log_m = space.m().iter().map(|w| w.ln()).collect();
        Ok(Self {
            space,
            costs,
            losses,
            mu1,
            mum1,
            eps,
            log_m,
        })
    }

    /// Same game at a different regularization.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self { eps, ..self.clone() })
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    pub fn costs(&self) -> &CostPair {
        &self.costs
    }

    pub fn cost(&self, class: Class) -> &CostMatrix {
        self.costs.get(class)
    }

    pub fn losses(&self) -> &LossPair {
        &self.losses
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mu(&self, class: Class) -> &[f64] {
        match class {
            Class::Pos => &self.mu1,
            Class::Neg => &self.mum1,
        }
    }

    pub(crate) fn log_m(&self) -> &[f64] {
        &self.log_m
    }

    /// `l_i(t)` for the given class.
    #[inline]
    pub fn loss(&self, class: Class, t: f64) -> f64 {
        match class {
            Class::Pos => self.losses.l1(t),
            Class::Neg => self.losses.lm1(t),
        }
    }

    #[inline]
    pub fn d_loss(&self, class: Class, t: f64) -> f64 {
        match class {
            Class::Pos => self.losses.d_l1(t),
            Class::Neg => self.losses.d_lm1(t),
        }
    }

    pub(crate) fn check_classifier(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.len() {
            return Err(invalid(format!(
                "classifier has {} values, expected {}",
                h.len(),
                self.len()
            )));
        }
        if let Some(k) = h.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("classifier value {k} = {} is not finite", h[k])));
        }
        Ok(())
    }
}

/// A dense coupling on `X × X`, row-major; row index is the clean point `x`,
/// column index the corrupted point `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n: usize,
    mass: Vec<f64>,
}

impl TransportPlan {
    pub fn from_row_major(n: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != n * n {
            return Err(invalid(format!("plan has {} entries, expected {}", mass.len(), n * n)));
        }
        if let Some(k) = mass.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!(
                "plan entry {k} = {} is not a nonnegative mass",
                mass[k]
            )));
        }
        Ok(Self { n, mass })
    }

    /// The identity coupling `(id, id)_# μ`.
    pub fn diagonal(mu: &[f64]) -> Self {
        let n = mu.len();
        let mut mass = vec![0.0; n * n];
        for (x, &w) in mu.iter().enumerate() {
            mass[x * n + x] = w;
        }
        Self { n, mass }
    }

    /// `(id, S)_# μ` for a map `S` given by its values.
    pub fn from_map(mu: &[f64], target: &[usize]) -> Self {
        let n = mu.len();
        let mut mass = vec![0.0; n * n];
        for (x, (&w, &z)) in mu.iter().zip(target).enumerate() {
            mass[x * n + z] += w;
        }
        Self { n, mass }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, x: usize, z: usize) -> f64 {
        self.mass[x * self.n + z]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.mass[x * self.n..(x + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.n).map(|x| self.row(x).iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for x in 0..self.n {
            for (o, v) in out.iter_mut().zip(self.row(x)) {
                *o += v;
            }
        }
        out
    }

    /// `⟨c, γ⟩`; `+∞` as soon as positive mass sits on an infinite entry.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        let mut total = 0.0;
        for x in 0..self.n {
            for (&g, &c) in self.row(x).iter().zip(cost.row(x)) {
                if g > 0.0 {
                    if c == f64::INFINITY {
                        return f64::INFINITY;
                    }
                    total += g * c;
                }
            }
        }
        total
    }

    /// `H(γ | μ ⊗ m) = Σ γ log(γ / (μ(x) m(z)))`, `+∞` if not absolutely
    /// continuous.
    pub fn relative_entropy(&self, mu: &[f64], m: &[f64]) -> f64 {
        let mut total = 0.0;
        for x in 0..self.n {
            for (z, &g) in self.row(x).iter().enumerate() {
                if g > 0.0 {
                    let reference = mu[x] * m[z];
                    if reference == 0.0 {
                        return f64::INFINITY;
                    }
                    total += g * (g / reference).ln();
                }
            }
        }
        total
    }
}

/// The adversary's corrupted class distributions.
#[derive(Debug, Clone)]
pub struct AttackProfile {
    /// Density of `ν₁` with respect to `m`.
    pub nu1: GridFunction,
    /// Density of `ν₋₁` with respect to `m`.
    pub num1: GridFunction,
    /// Couplings `γ₁, γ₋₁` realizing the profile, when known.
    pub plans: Option<[TransportPlan; 2]>,
    /// Schrödinger potentials known to be optimal for the profile (used to
    /// warm-start entropic transport).
    pub potentials: Option<[GridFunction; 2]>,
}

impl AttackProfile {
    /// Profile from densities only.
    pub fn from_densities(nu1: Vec<f64>, num1: Vec<f64>) -> Self {
        Self {
            nu1: nu1.into(),
            num1: num1.into(),
            plans: None,
            potentials: None,
        }
    }

    /// The "no corruption" profile `ν_i = μ_i` with diagonal plans.
    pub fn identity(problem: &Problem) -> Self {
        let m = problem.space().m();
        let density = |mu: &[f64]| -> GridFunction { mu.iter().zip(m).map(|(a, b)| a / b).collect::<Vec<_>>().into() };
        Self {
            nu1: density(problem.mu(Class::Pos)),
            num1: density(problem.mu(Class::Neg)),
            plans: Some([
                TransportPlan::diagonal(problem.mu(Class::Pos)),
                TransportPlan::diagonal(problem.mu(Class::Neg)),
            ]),
            potentials: None,
        }
    }

    pub fn density(&self, class: Class) -> &[f64] {
        match class {
            Class::Pos => &self.nu1,
            Class::Neg => &self.num1,
        }
    }

    pub fn plan(&self, class: Class) -> Option<&TransportPlan> {
        self.plans.as_ref().map(|p| &p[class.index()])
    }

    /// Point masses `ν_i(z) = density(z) · m(z)`.
    pub fn masses(&self, class: Class, m: &[f64]) -> Vec<f64> {
        self.density(class).iter().zip(m).map(|(d, w)| d * w).collect()
    }

    /// `dν₁ / d(ν₁ + ν₋₁)`; NaN where both densities vanish.
    pub fn alphabar(&self) -> Vec<f64> {
        self.nu1
            .iter()
            .zip(self.num1.iter())
            .map(|(&a, &b)| if a + b > 0.0 { a / (a + b) } else { f64::NAN })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::power_cost;

    #[test]
    fn problem_validates_measures() {
        let s = DiscreteSpace::torus(4).unwrap();
        let c = CostPair::symmetric(power_cost(&s, 1.0).unwrap());
        let ok = Problem::new(
            s.clone(),
            c.clone(),
            LossPair::Logistic,
            vec![0.25; 4],
            vec![0.5, 0.5, 0.0, 0.0],
            0.1,
        );
        assert!(ok.is_ok());
        let bad_mass = Problem::new(
            s.clone(),
            c.clone(),
            LossPair::Logistic,
            vec![0.3; 4],
            vec![0.25; 4],
            0.1,
        );
        assert!(bad_mass.is_err());
        let negative = Problem::new(
            s.clone(),
            c.clone(),
            LossPair::Logistic,
            vec![0.5, 0.5, 0.5, -0.5],
            vec![0.25; 4],
            0.1,
        );
        assert!(negative.is_err());
        let bad_eps = Problem::new(s, c, LossPair::Logistic, vec![0.25; 4], vec![0.25; 4], 0.0);
        assert!(bad_eps.is_err());
    }

    #[test]
    fn plan_marginals_and_entropy() {
        let mu = [0.5, 0.5, 0.0];
        let plan = TransportPlan::from_map(&mu, &[1, 1, 2]);
        assert_eq!(plan.row_marginal(), vec![0.5, 0.5, 0.0]);
        assert_eq!(plan.col_marginal(), vec![0.0, 1.0, 0.0]);
        let m = [1.0 / 3.0; 3];
        // γ = δ_(0,1)/2 + δ_(1,1)/2, reference μ⊗m gives ratio 3 on support
        assert!((plan.relative_entropy(&mu, &m) - 3f64.ln()).abs() < 1e-14);
        assert!(TransportPlan::from_row_major(2, vec![0.5, -0.1, 0.0, 0.6]).is_err());
    }

    #[test]
    fn infinite_cost_with_mass_is_infinite() {
        let mu = [0.5, 0.5];
        let plan = TransportPlan::from_map(&mu, &[1, 1]);
        let c = CostMatrix::from_row_major(2, vec![0.0, f64::INFINITY, 1.0, 0.0]).unwrap();
        assert_eq!(plan.cost(&c), f64::INFINITY);
        let diag = TransportPlan::diagonal(&mu);
        assert_eq!(diag.cost(&c), 0.0);
    }
}
