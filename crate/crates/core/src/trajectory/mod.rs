//! Trajectory design for a fixed power schedule by successive convex
//! approximation: the rate is replaced by its tangent lower bound in the
//! squared distance to the SR, the squared distances to the primary
//! receivers by their tangent planes, and the resulting convex problem is
//! solved with a log-barrier method. Each round is feasible for the original
//! constraints and never lowers the true average rate.

mod barrier;
mod sca;
mod surrogate;

use thiserror::Error;

pub use barrier::{barrier_gradient, barrier_value, solve_p31, SubproblemSolution};
pub use sca::{sca_trajectory, ScaOutcome};
pub use surrogate::{
    build_p31, linearized_rate_bound, linearized_sq_distance, rate_gradient, CapRow, RateBound,
    SurrogateModel,
};

use crate::model::Constraint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("expected {slots} slots, got {waypoints} waypoints and {powers} powers")]
    Shape { slots: usize, waypoints: usize, powers: usize },
    #[error("slot {slot} moves {step:.6} m but at most {limit:.6} m is allowed")]
    SpeedViolation { slot: usize, step: f64, limit: f64 },
    #[error("{which} waypoint is {offset:.3e} m off its prescribed location")]
    Endpoint { which: &'static str, offset: f64 },
    #[error("receiver {receiver} has a zero interference cap but the power schedule transmits")]
    ZeroCapWithPower { receiver: usize },
    #[error("initial trajectory violates {0:?}")]
    InfeasibleStart(Constraint),
}
