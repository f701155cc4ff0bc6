//! Solver for zero-sum adversarial binary classification games in which the
//! adversary corrupts each class distribution at an optimal-transport cost.
//!
//! The classifier's problem is regularized by replacing the adversary's
//! pointwise best response (a hard c-transform) with a softmax against a
//! reference measure `m`. The regularized problem is smooth and convex, is
//! solved by quasi-Newton descent, and its value is certified from below by
//! entropic optimal transport ([`entropic_ot`]) and bracketed for the
//! unregularized game by [`solver::upper_value_t0`] and
//! [`solver::lower_bound_unreg`].
//!
//! Everything lives on a finite space ([`space::DiscreteSpace`]), with the
//! one-dimensional torus grid built in.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod entropic_ot;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod problem;
pub mod solver;
pub mod space;
pub mod transform;

pub use error::{Error, Result};
pub use losses::LossPair;
pub use problem::{AttackProfile, Problem, TransportPlan};
pub use solver::{Classifier, SolveReport, SolverOptions};
pub use space::{CostMatrix, CostPair, DiscreteSpace};
pub use transform::GridFunction;

/// A class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Class {
    /// Label `+1`.
    Pos,
    /// Label `−1`.
    Neg,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::Pos, Class::Neg];

    pub fn index(self) -> usize {
        match self {
            Class::Pos => 0,
            Class::Neg => 1,
        }
    }
}
