//! Realtime selection of the preset braking deceleration for a fail-safe
//! hydraulic emergency stop.
//!
//! Each planning cycle the vehicle knows its speed `v0` and the current valve
//! setting `a_prev`, but not when (within the next replanning interval) the
//! electronics will fail. The preset deceleration `a_next` is chosen to
//! minimise the penalty `W(t, s)` accumulated by the resulting stopping
//! trajectory, averaged over a uniformly distributed failure time and
//! accounting for the finite speed of the pressure-regulation valve.
//!
//! Two solvers are provided:
//!
//! * [`fast_solver`] precomputes, per prediction-time row, prefix integrals of
//!   the penalty weighted by the failure-time density. Each candidate is then
//!   evaluated with a handful of O(1) lookups per row.
//! * [`direct_solver`] enumerates failure times and integrates every
//!   trajectory explicitly. It is slow and serves as the reference.
//!
//! The [`bench`] module measures both against each other.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod direct_solver;
pub mod error;
pub mod fast_solver;
pub mod field;
pub mod kinematics;
pub mod plan;
pub mod substitution;

pub use error::{Error, Result};
pub use field::PenaltyField;
pub use kinematics::{PlanParams, ValveTransition};
pub use plan::{CandidateEvaluation, PlanResult, Solver};
