//! Classifier loss pairs and the conditional risks built from them.
//!
//! For weights `a, b >= 0` the mixed loss `t ↦ a·l₁(t) + b·l₋₁(t)` is convex.
//! Its infimum is `Ψ(a, b)`; `Φ(α) = Ψ(α, 1 − α)` is the conditional risk at
//! local class-(+1) fraction `α`.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// A user supplied pair of losses. `l1` must be convex nonincreasing with
/// `l1(−∞) = +∞`, `lm1` convex nondecreasing with `lm1(+∞) = +∞`, both
/// nonnegative.
pub trait BinaryLoss: Send + Sync {
    fn l1(&self, t: f64) -> f64;
    fn lm1(&self, t: f64) -> f64;
    fn d_l1(&self, t: f64) -> f64;
    fn d_lm1(&self, t: f64) -> f64;
}

#[derive(Clone)]
pub enum LossPair {
    /// `l(h, y) = log(1 + exp(−y h))`.
    Logistic,
    /// `l(h, y) = max(0, 1 − y h)`.
    Hinge,
    User(Arc<dyn BinaryLoss>),
}

impl fmt::Debug for LossPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−α log α − (1 − α) log(1 − α)` with `0 log 0 = 0`.
pub fn binary_entropy(alpha: f64) -> f64 {
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    -xlogx(alpha) - xlogx(1.0 - alpha)
}

const GOLDEN_TOL: f64 = 1e-12;
const BRACKET_LIMIT: f64 = 1e8;

impl LossPair {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "logistic" => Ok(Self::Logistic),
            "hinge" => Ok(Self::Hinge),
            other => Err(invalid(format!(
                "unknown loss kind {other:?} (expected \"logistic\" or \"hinge\")"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::Hinge => "hinge",
            Self::User(_) => "user",
        }
    }

    /// Whether both losses are differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::Hinge)
    }

    #[inline]
    pub fn l1(&self, t: f64) -> f64 {
        match self {
            Self::Logistic => softplus(-t),
            Self::Hinge => (1.0 - t).max(0.0),
            Self::User(u) => u.l1(t),
        }
    }

    #[inline]
    pub fn lm1(&self, t: f64) -> f64 {
        match self {
            Self::Logistic => softplus(t),
            Self::Hinge => (1.0 + t).max(0.0),
            Self::User(u) => u.lm1(t),
        }
    }

    /// Derivative of `l1`. At the hinge kink the average of the one-sided
    /// derivatives is returned.
    #[inline]
    pub fn d_l1(&self, t: f64) -> f64 {
        match self {
            Self::Logistic => -sigmoid(-t),
            Self::Hinge => match t.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Less) => -1.0,
                Some(std::cmp::Ordering::Equal) => -0.5,
                _ => 0.0,
            },
            Self::User(u) => u.d_l1(t),
        }
    }

    #[inline]
    pub fn d_lm1(&self, t: f64) -> f64 {
        match self {
            Self::Logistic => sigmoid(t),
            Self::Hinge => match t.partial_cmp(&-1.0) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Equal) => 0.5,
                _ => 0.0,
            },
            Self::User(u) => u.d_lm1(t),
        }
    }

    /// True when `t` sits on a point where one of the losses is not
    /// differentiable.
    pub fn at_kink(&self, t: f64) -> bool {
        matches!(self, Self::Hinge) && (t == 1.0 || t == -1.0)
    }

    #[inline]
    pub fn mixed(&self, a1: f64, am1: f64, t: f64) -> f64 {
        // 0·∞ never happens: losses are finite on ℝ
        let mut v = 0.0;
        if a1 != 0.0 {
            v += a1 * self.l1(t);
        }
        if am1 != 0.0 {
            v += am1 * self.lm1(t);
        }
        v
    }

    /// `Φ(α) = inf_t α l₁(t) + (1 − α) l₋₁(t)` for `α ∈ [0, 1]`.
    pub fn phi(&self, alpha: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("phi needs alpha in [0,1], got {alpha}")));
        }
        Ok(match self {
            Self::Logistic => binary_entropy(alpha),
            Self::Hinge => 2.0 * alpha.min(1.0 - alpha),
            Self::User(_) => self.generic_inf(alpha, 1.0 - alpha),
        })
    }

    /// `Ψ(a, b) = inf_t a l₁(t) + b l₋₁(t)`, positively homogeneous.
    pub fn psi(&self, a1: f64, am1: f64) -> Result<f64> {
        if !(a1 >= 0.0) || !(am1 >= 0.0) {
            return Err(invalid(format!("psi needs nonnegative weights, got ({a1}, {am1})")));
        }
        let total = a1 + am1;
        if total == 0.0 {
            return Ok(0.0);
        }
        Ok(match self {
            Self::Logistic => {
                // a log((a+b)/a) + b log((a+b)/b)
                let lt = total.ln();
                let term = |w: f64| if w > 0.0 { w * (lt - w.ln()) } else { 0.0 };
                term(a1) + term(am1)
            }
            Self::Hinge => 2.0 * a1.min(am1),
            Self::User(_) => self.generic_inf(a1, am1),
        })
    }

    /// The minimizer of `t ↦ a₁ l₁(t) + a₋₁ l₋₁(t)` for strictly positive
    /// weights. On a flat optimal face the minimizer of smallest magnitude
    /// is returned.
    pub fn pointwise_argmin(&self, a1: f64, am1: f64) -> Result<f64> {
        if !(a1 >= 0.0) || !(am1 >= 0.0) || !a1.is_finite() || !am1.is_finite() {
            return Err(invalid(format!(
                "argmin needs finite nonnegative weights, got ({a1}, {am1})"
            )));
        }
        if a1 == 0.0 || am1 == 0.0 {
            return Err(Error::UnattainedMinimum(format!(
                "weight pair ({a1}, {am1}) has a zero entry"
            )));
        }
        Ok(match self {
            Self::Logistic => a1.ln() - am1.ln(),
            Self::Hinge => match a1.partial_cmp(&am1) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => -1.0,
                _ => 0.0,
            },
            Self::User(_) => {
                let (lo, hi) = self.bracket(a1, am1);
                golden_section(|t| self.mixed(a1, am1, t), lo, hi)
            }
        })
    }

    fn generic_inf(&self, a1: f64, am1: f64) -> f64 {
        let (lo, hi) = self.bracket(a1, am1);
        let t = golden_section(|t| self.mixed(a1, am1, t), lo, hi);
        self.mixed(a1, am1, t)
    }

    /// An interval containing a minimizer of the (convex) mixed loss. For a
    /// unattained infimum the interval runs out to the expansion limit.
    fn bracket(&self, a1: f64, am1: f64) -> (f64, f64) {
        let f = |t: f64| self.mixed(a1, am1, t);
        let f0 = f(0.0);
        let mut hi = 1.0;
        while hi < BRACKET_LIMIT && f(hi) < f0 {
            hi *= 2.0;
        }
        let mut lo = -1.0;
        while lo > -BRACKET_LIMIT && f(lo) < f0 {
            lo *= 2.0;
        }
        (lo, hi)
    }
}

/// Golden-section search for a minimizer of a convex function on `[lo, hi]`.
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > GOLDEN_TOL * (1.0 + lo.abs().max(hi.abs())) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}
