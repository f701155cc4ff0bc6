//! Finite metric spaces, reference measures and attack cost matrices.

use crate::error::{invalid, Result};

const MASS_TOL: f64 = 1e-12;

/// A finite metric space carrying a full-support reference probability `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace {
    points: Vec<f64>,
    metric: Vec<f64>,
    m: Vec<f64>,
}

impl DiscreteSpace {
    /// Uniform grid `k/N` on the unit-circumference torus with `m = 1/N`.
    pub fn torus(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("torus needs at least 2 points, got {n}")));
        }
        let points = (0..n).map(|k| k as f64 / n as f64).collect();
        let mut metric = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let gap = j.abs_diff(k);
                metric[j * n + k] = gap.min(n - gap) as f64 / n as f64;
            }
        }
        Ok(Self {
            points,
            metric,
            m: vec![1.0 / n as f64; n],
        })
    }

    /// Builds a space from a user supplied metric (row-major `N×N`) and
    /// reference weights. The metric is checked for symmetry, zero diagonal,
    /// nonnegativity and the triangle inequality.
    pub fn from_metric(points: Vec<f64>, metric: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(invalid("space must have at least one point"));
        }
        if metric.len() != n * n {
            return Err(invalid(format!(
                "metric has {} entries, expected {}",
                metric.len(),
                n * n
            )));
        }
        if m.len() != n {
            return Err(invalid(format!(
                "reference measure has {} weights, expected {n}",
                m.len()
            )));
        }
        for j in 0..n {
            if metric[j * n + j] != 0.0 {
                return Err(invalid(format!("metric diagonal entry {j} is not zero")));
            }
            for k in 0..n {
                let d = metric[j * n + k];
                if !d.is_finite() || d < 0.0 {
                    return Err(invalid(format!(
                        "metric entry ({j},{k}) = {d} is not a finite nonnegative number"
                    )));
                }
                if d != metric[k * n + j] {
                    return Err(invalid(format!("metric is not symmetric at ({j},{k})")));
                }
            }
        }
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let lhs = metric[j * n + l];
                    let rhs = metric[j * n + k] + metric[k * n + l];
                    if lhs > rhs * (1.0 + 1e-12) + 1e-15 {
                        return Err(invalid(format!("triangle inequality fails on ({j},{k},{l})")));
                    }
                }
            }
        }
        check_full_support(&m)?;
        Ok(Self { points, metric, m })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Reference measure weights.
    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn distance(&self, j: usize, k: usize) -> f64 {
        self.metric[j * self.len() + k]
    }

    /// Row-major distance matrix.
    pub fn metric(&self) -> &[f64] {
        &self.metric
    }
}

fn check_full_support(m: &[f64]) -> Result<()> {
    if let Some((k, w)) = m.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
        return Err(invalid(format!("reference weight {k} = {w} is not strictly positive")));
    }
    let total: f64 = m.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(invalid(format!("reference weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Checks that `w` is a probability vector of length `n` (zeros allowed).
pub(crate) fn check_probability(name: &str, w: &[f64], n: usize, tol: f64) -> Result<()> {
    if w.len() != n {
        return Err(invalid(format!("{name} has {} weights, expected {n}", w.len())));
    }
    if let Some((k, x)) = w.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
        return Err(invalid(format!("{name}[{k}] = {x} is not a finite nonnegative weight")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(invalid(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}

/// Which constructor produced a cost matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostLabel {
    Power { r: f64 },
    Indicator { threshold: f64, level: f64 },
    Custom,
}

/// A square attack cost matrix with entries in `[0, +∞]` and zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
    label: CostLabel,
}

impl CostMatrix {
    /// Validates a row-major `n×n` matrix.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(invalid(format!("cost has {} entries, expected {}", data.len(), n * n)));
        }
        for j in 0..n {
            if data[j * n + j] != 0.0 {
                return Err(invalid(format!("cost diagonal entry {j} is not zero")));
            }
        }
        if let Some(k) = data.iter().position(|c| !(*c >= 0.0)) {
            return Err(invalid(format!(
                "cost entry ({},{}) = {} is negative or NaN",
                k / n,
                k % n,
                data[k]
            )));
        }
        Ok(Self {
            n,
            data,
            label: CostLabel::Custom,
        })
    }

    /// The all-zero cost (free corruption).
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
            label: CostLabel::Custom,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn label(&self) -> CostLabel {
        self.label
    }

    #[inline]
    pub fn get(&self, x: usize, z: usize) -> f64 {
        self.data[x * self.n + z]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.n..(x + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `c(x,z) = d(x,z)^r`.
pub fn power_cost(space: &DiscreteSpace, r: f64) -> Result<CostMatrix> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid(format!("cost exponent must be positive, got {r}")));
    }
    let data = space
        .metric()
        .iter()
        .map(|&d| if d == 0.0 { 0.0 } else { d.powf(r) })
        .collect();
    Ok(CostMatrix {
        n: space.len(),
        data,
        label: CostLabel::Power { r },
    })
}

/// `c(x,z) = 0` when `d(x,z) <= threshold`, `level` otherwise. `level` may be
/// `+∞`, which turns the cost into a hard ball constraint.
pub fn indicator_cost(space: &DiscreteSpace, threshold: f64, level: f64) -> Result<CostMatrix> {
    if !(threshold >= 0.0) {
        return Err(invalid(format!(
            "indicator threshold must be nonnegative, got {threshold}"
        )));
    }
    if !(level >= 0.0) {
        return Err(invalid(format!("indicator level must be nonnegative, got {level}")));
    }
    let data = space
        .metric()
        .iter()
        .map(|&d| if d <= threshold { 0.0 } else { level })
        .collect();
    Ok(CostMatrix {
        n: space.len(),
        data,
        label: CostLabel::Indicator { threshold, level },
    })
}

/// Costs paid by the adversary for corrupting each class.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPair {
    pub c1: CostMatrix,
    pub cm1: CostMatrix,
}

impl CostPair {
    pub fn new(c1: CostMatrix, cm1: CostMatrix) -> Result<Self> {
        if c1.len() != cm1.len() {
            return Err(invalid("class costs have different sizes"));
        }
        Ok(Self { c1, cm1 })
    }

    /// Same cost for both classes.
    pub fn symmetric(c: CostMatrix) -> Self {
        Self { c1: c.clone(), cm1: c }
    }

    pub fn get(&self, class: crate::Class) -> &CostMatrix {
        match class {
            crate::Class::Pos => &self.c1,
            crate::Class::Neg => &self.cm1,
        }
    }
}
