//! Domain types and closed-form link physics for the joint trajectory and
//! power problem.
//!
//! Slot `n` (1-based, `n = 1..=N`) is served from waypoint `q[n]`; `q[0]` only
//! takes part in the kinematic constraints.

mod channel;
mod feasibility;
mod scenario;

use nalgebra::Vector2;
use serde::Serialize;
use thiserror::Error;

pub use channel::{
    average_interference, average_rate, channel_gain_pr, channel_gain_sr, interference, rate,
    slot_rates,
};
pub use feasibility::{
    check_feasibility, Constraint, ConstraintCheck, FeasibilityReport, ENDPOINT_TOL_M,
};
pub use scenario::{PrimaryReceiver, Scenario};

/// Horizontal position in meters.
pub type Point = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidScenario { field: &'static str, reason: String },
    #[error("endpoints are {distance:.3} m apart but at most {reach:.3} m can be covered")]
    Unreachable { distance: f64, reach: f64 },
    #[error("transmit power must be non-negative, got {0}")]
    NegativePower(f64),
    #[error("expected {slots} slots ({} waypoints), got {waypoints} waypoints and {powers} powers", slots + 1)]
    LengthMismatch { slots: usize, waypoints: usize, powers: usize },
}

/// `N + 1` horizontal waypoints `q[0..=N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Point>,
}

impl Trajectory {
    /// Constant-speed interpolation `q[n] = q_I + (n/N)(q_F − q_I)`.
    /// Does not check reachability.
    pub fn straight_line(scenario: &Scenario) -> Self {
        let n = scenario.num_slots;
        let (a, b) = (scenario.q_init, scenario.q_final);
        let mut points: Vec<Point> =
            (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect();
        points[n] = b;
        Trajectory { points }
    }

    pub fn num_slots(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    /// Displacement of every slot, `‖q[n] − q[n−1]‖` for `n = 1..=N`.
    pub fn step_lengths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    pub fn translated(&self, offset: Point) -> Self {
        Trajectory { points: self.points.iter().map(|p| p + offset).collect() }
    }
}

/// Per-slot transmit powers `p[1..=N]` in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(n: usize) -> Self {
        PowerAllocation { powers: vec![0.0; n] }
    }

    pub fn constant(n: usize, p: f64) -> Self {
        PowerAllocation { powers: vec![p; n] }
    }

    pub fn average(&self) -> f64 {
        if self.powers.is_empty() {
            return 0.0;
        }
        self.powers.iter().sum::<f64>() / self.powers.len() as f64
    }
}

/// Non-fatal conditions raised while producing a [`Solution`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum SolverFlag {
    /// The dual search for the power subproblem hit its iteration cap.
    PowerIterationCap,
    /// A convex trajectory subproblem hit its Newton-step cap.
    BarrierIterationCap,
    /// Successive convex approximation stopped on `max_sca_iters`.
    ScaIterationCap,
    /// Alternation stopped on `max_outer_iters`.
    OuterIterationCap,
    /// The mission is too short for fly-hover-fly; the straight line was used instead.
    FlyHoverFlyFallback,
    /// The constant-power benchmark could not use the full budget.
    ConstantPowerReduced { power: f64 },
    /// No positive constant power is admissible.
    ConstantPowerZero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IterationCounts {
    /// Completed alternation rounds.
    pub outer: usize,
    /// Convex trajectory subproblems solved across all rounds.
    pub sca: usize,
    /// Newton steps spent in trajectory subproblems.
    pub newton: usize,
    /// Dual iterations spent in power subproblems.
    pub dual: usize,
}

impl std::ops::AddAssign for IterationCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.outer += rhs.outer;
        self.sca += rhs.sca;
        self.newton += rhs.newton;
        self.dual += rhs.dual;
    }
}

/// One entry of a convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub stage: Stage,
    pub outer: usize,
    pub inner: usize,
    /// Average rate (bps/Hz) after the step.
    pub objective: f64,
    /// Largest feasibility residual relative to its allowance (≤ 1 means feasible).
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Power,
    Sca,
    Trajectory,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::Power => "power",
            Stage::Sca => "sca",
            Stage::Trajectory => "trajectory",
        }
    }
}

/// A trajectory/power pair with its derived metrics and iteration history.
#[derive(Debug, Clone)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub power: PowerAllocation,
    pub avg_rate: f64,
    pub slot_rates: Vec<f64>,
    pub avg_interference: Vec<f64>,
    /// Objective after every half-step of the outer loop.
    pub objective_history: Vec<f64>,
    pub convergence: Vec<ConvergenceRecord>,
    pub iterations: IterationCounts,
    pub flags: Vec<SolverFlag>,
}

impl Solution {
    /// Builds a solution with metrics evaluated from the raw physics.
    pub fn evaluate(
        trajectory: Trajectory,
        power: PowerAllocation,
        scenario: &Scenario,
    ) -> Result<Self, ModelError> {
        let slot_rates = slot_rates(&trajectory, &power, scenario)?;
        let avg_rate = slot_rates.iter().sum::<f64>() / slot_rates.len() as f64;
        let avg_interference = average_interference(&trajectory, &power, scenario)?;
        Ok(Solution {
            trajectory,
            power,
            avg_rate,
            slot_rates,
            avg_interference,
            objective_history: Vec::new(),
            convergence: Vec::new(),
            iterations: IterationCounts::default(),
            flags: Vec::new(),
        })
    }

    pub fn feasibility(&self, scenario: &Scenario, tol: f64) -> FeasibilityReport {
        check_feasibility(&self.trajectory, &self.power, scenario, tol)
    }

    pub fn translated(mut self, offset: Point) -> Self {
        self.trajectory = self.trajectory.translated(offset);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_endpoints_exact() {
        let s = Scenario::reference();
        let t = Trajectory::straight_line(&s);
        assert_eq!(t.points.len(), 201);
        assert_eq!(t.points[0], s.q_init);
        assert_eq!(t.points[200], s.q_final);
        assert!(t.points[100].norm() < 1e-12);
    }

    #[test]
    fn evaluated_average_matches_mean() {
        let s = Scenario::reference();
        let t = Trajectory::straight_line(&s);
        let p = PowerAllocation::constant(s.num_slots, 0.3);
        let sol = Solution::evaluate(t, p, &s).unwrap();
        let mean = sol.slot_rates.iter().sum::<f64>() / 200.0;
        assert!((sol.avg_rate - mean).abs() <= 1e-12 * mean);
    }
}
