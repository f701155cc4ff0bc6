//! Hard and entropic (softmax) c-transforms on a finite space.

use std::ops::{Deref, DerefMut};

use crate::error::{invalid, Error, Result};
use crate::space::{CostMatrix, DiscreteSpace};

/// Real values indexed by the points of a space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridFunction(Vec<f64>);

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `max |f|`.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl From<Vec<f64>> for GridFunction {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for GridFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GridFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Scaled log-partition of one kernel row: `lse = max + ln(sum)` where the
/// row terms are `t_z = (ψ(z) − c(x,z))/ε + ln m(z)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RowLse {
    pub lse: f64,
    /// `Σ_z exp(t_z − max)`; the row's softmax weights are `terms[z] / sum`.
    pub sum: f64,
}

/// Computes the stabilized log-sum-exp of one kernel row and leaves
/// `exp(t_z − max)` in `terms` (0 for infinite cost). `None` means every
/// term is −∞.
#[inline]
pub(crate) fn soft_row(
    psi: &[f64],
    cost_row: &[f64],
    log_m: &[f64],
    inv_eps: f64,
    terms: &mut [f64],
) -> Option<RowLse> {
    let mut max = f64::NEG_INFINITY;
    for (((t, &p), &c), &lm) in terms.iter_mut().zip(psi).zip(cost_row).zip(log_m) {
        *t = if c == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            (p - c) * inv_eps + lm
        };
        if *t > max {
            max = *t;
        }
    }
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut sum = 0.0;
    for t in terms.iter_mut() {
        *t = (*t - max).exp();
        sum += *t;
    }
    Some(RowLse {
        lse: max + sum.ln(),
        sum,
    })
}

fn check_shapes(psi: &[f64], cost: &CostMatrix, space: &DiscreteSpace) -> Result<()> {
    if psi.len() != space.len() || cost.len() != space.len() {
        return Err(invalid(format!(
            "shape mismatch: potential {} / cost {} / space {}",
            psi.len(),
            cost.len(),
            space.len()
        )));
    }
    if let Some(k) = psi.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("potential entry {k} = {} is not finite", psi[k])));
    }
    Ok(())
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!(
            "regularization must be positive and finite, got {eps}"
        )));
    }
    Ok(())
}

/// `ψ^{[ε,c,m]}(x) = ε log Σ_z m(z) exp((ψ(z) − c(x,z))/ε)`.
pub fn soft_ctransform(psi: &[f64], cost: &CostMatrix, eps: f64, space: &DiscreteSpace) -> Result<GridFunction> {
    check_eps(eps)?;
    check_shapes(psi, cost, space)?;
    let n = space.len();
    let log_m: Vec<f64> = space.m().iter().map(|w| w.ln()).collect();
    let inv_eps = 1.0 / eps;
    let mut terms = vec![0.0; n];
    let mut out = Vec::with_capacity(n);
    for x in 0..n {
        let row = soft_row(psi, cost.row(x), &log_m, inv_eps, &mut terms).ok_or(Error::DegenerateKernel { row: x })?;
        out.push(eps * row.lse);
    }
    Ok(GridFunction(out))
}

/// `ψ^{[0,c]}(x) = max_z ψ(z) − c(x,z)`.
pub fn hard_ctransform(psi: &[f64], cost: &CostMatrix, space: &DiscreteSpace) -> Result<GridFunction> {
    check_shapes(psi, cost, space)?;
    let out = (0..space.len()).map(|x| row_argmax(psi, cost.row(x)).1).collect();
    Ok(GridFunction(out))
}

/// Index and value of `max_z ψ(z) − c(x,z)`; the first maximizer wins ties.
pub(crate) fn row_argmax(psi: &[f64], cost_row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (z, (&p, &c)) in psi.iter().zip(cost_row).enumerate() {
        let v = p - c;
        if v > best.1 {
            best = (z, v);
        }
    }
    best
}
