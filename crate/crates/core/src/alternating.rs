//! Block-coordinate ascent over the power schedule and the trajectory.
//!
//! Each round solves the power subproblem on the current trajectory and then
//! runs successive convex approximation on the trajectory for the new
//! powers. Both half-steps keep the pair feasible and never lower the
//! average rate, so the recorded objective sequence is non-decreasing.

use thiserror::Error;

use crate::model::{
    check_feasibility, ConvergenceRecord, ModelError, PowerAllocation, Scenario, Solution,
    SolverFlag, Stage, Trajectory,
};
use crate::options::{OptionsError, SolverOptions};
use crate::power::{solve_power_warm, PowerError};
use crate::trajectory::{sca_trajectory, TrajectoryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Options(#[from] OptionsError),
    #[error("power subproblem: {0}")]
    Power(#[from] PowerError),
    #[error("trajectory subproblem: {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error("solution fails the final feasibility check on {0}")]
    Infeasible(String),
}

/// Constant-speed flight from `q_init` to `q_final`.
pub fn straight_line_trajectory(scenario: &Scenario) -> Result<Trajectory, ModelError> {
    let distance = (scenario.q_final - scenario.q_init).norm();
    let reach = scenario.max_speed * scenario.duration;
    if distance > reach * (1.0 + 1e-12) {
        return Err(ModelError::Unreachable { distance, reach });
    }
    Ok(Trajectory::straight_line(scenario))
}

/// Joint optimization from the straight-line initialization.
pub fn optimize_joint(scenario: &Scenario, opts: &SolverOptions) -> Result<Solution, SolveError> {
    scenario.validate()?;
    let init = straight_line_trajectory(scenario)?;
    optimize_joint_from(scenario, opts, &init)
}

/// Joint optimization from a caller-supplied kinematically feasible
/// trajectory. The computation runs in a frame centred on the SR.
pub fn optimize_joint_from(
    scenario: &Scenario,
    opts: &SolverOptions,
    init: &Trajectory,
) -> Result<Solution, SolveError> {
    scenario.validate()?;
    opts.validate()?;
    let origin = scenario.sr_pos;
    let local = scenario.translated(-origin);
    let local_init = init.translated(-origin);
    let solution = alternate(&local, opts, local_init)?;
    let solution = solution.translated(origin);
    let report = solution.feasibility(scenario, opts.feasibility_tol);
    if let Some(bad) = report.violations().next() {
        return Err(SolveError::Infeasible(format!("{:?}", bad.constraint)));
    }
    Ok(solution)
}

fn alternate(
    scenario: &Scenario,
    opts: &SolverOptions,
    init: Trajectory,
) -> Result<Solution, SolveError> {
    let mut trajectory = init;
    let mut history = Vec::new();
    let mut records = Vec::new();
    let mut flags = Vec::new();
    let mut counts = crate::model::IterationCounts::default();

    let residual = |t: &Trajectory, p: &PowerAllocation| {
        check_feasibility(t, p, scenario, opts.feasibility_tol).worst_scaled_residual()
    };

    let mut power: Option<PowerAllocation> = None;
    let mut duals = None;
    let mut objective = f64::NEG_INFINITY;
    let mut round_start: Option<f64> = None;

    for outer in 1..=opts.max_outer_iters {
        counts.outer = outer;

        let sol = solve_power_warm(&trajectory, scenario, opts, duals.as_ref())?;
        counts.dual += sol.iterations;
        if sol.capped && !flags.contains(&SolverFlag::PowerIterationCap) {
            flags.push(SolverFlag::PowerIterationCap);
        }
        let candidate = crate::model::average_rate(&trajectory, &sol.power, scenario)?;
        if power.is_none() || candidate >= objective {
            power = Some(sol.power);
            duals = Some(sol.duals);
            objective = candidate;
        }
        let p = power.as_ref().expect("set above");
        history.push(objective);
        records.push(ConvergenceRecord {
            stage: Stage::Power,
            outer,
            inner: 0,
            objective,
            max_residual: residual(&trajectory, p),
        });

        let sca = sca_trajectory(p, &trajectory, scenario, opts)?;
        counts.sca += sca.rounds;
        counts.newton += sca.newton_steps;
        if sca.hit_newton_cap && !flags.contains(&SolverFlag::BarrierIterationCap) {
            flags.push(SolverFlag::BarrierIterationCap);
        }
        if sca.hit_round_cap && !flags.contains(&SolverFlag::ScaIterationCap) {
            flags.push(SolverFlag::ScaIterationCap);
        }
        for (inner, (&value, &res)) in sca.history.iter().zip(&sca.residuals).enumerate().skip(1) {
            records.push(ConvergenceRecord {
                stage: Stage::Sca,
                outer,
                inner,
                objective: value,
                max_residual: res,
            });
        }
        trajectory = sca.trajectory;
        objective = *sca.history.last().expect("history starts with the initial value");
        history.push(objective);
        records.push(ConvergenceRecord {
            stage: Stage::Trajectory,
            outer,
            inner: sca.rounds,
            objective,
            max_residual: *sca.residuals.last().expect("non-empty"),
        });

        if let Some(prev) = round_start {
            if objective - prev <= opts.outer_tol * objective.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        round_start = Some(objective);
        if outer == opts.max_outer_iters {
            flags.push(SolverFlag::OuterIterationCap);
        }
    }

    let power = power.expect("at least one round runs");
    let mut solution = Solution::evaluate(trajectory, power, scenario)?;
    solution.objective_history = history;
    solution.convergence = records;
    solution.iterations = counts;
    solution.flags = flags;
    Ok(solution)
}
