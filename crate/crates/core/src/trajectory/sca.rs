use crate::model::{average_rate, check_feasibility, Constraint, PowerAllocation, Scenario, Trajectory};
use crate::options::SolverOptions;

use super::{build_p31, solve_p31, TrajectoryError};

#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub trajectory: Trajectory,
    /// True average rate of the starting trajectory followed by one entry per
    /// solved subproblem.
    pub history: Vec<f64>,
    /// Worst scaled feasibility residual after each entry of `history`.
    pub residuals: Vec<f64>,
    /// Number of convex subproblems solved.
    pub rounds: usize,
    pub newton_steps: usize,
    pub hit_round_cap: bool,
    pub hit_newton_cap: bool,
}

/// Improves `init` for fixed `power` until the true average rate changes by
/// less than `opts.sca_tol` (relative) or `opts.max_sca_iters` rounds ran.
pub fn sca_trajectory(
    power: &PowerAllocation,
    init: &Trajectory,
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<ScaOutcome, TrajectoryError> {
    let report = check_feasibility(init, power, scenario, opts.feasibility_tol);
    if let Some(bad) = report.violations().find(|c| {
        !matches!(c.constraint, Constraint::AveragePower | Constraint::NonNegative { .. })
    }) {
        return Err(match bad.constraint {
            Constraint::Shape => TrajectoryError::Shape {
                slots: scenario.num_slots,
                waypoints: init.points.len(),
                powers: power.powers.len(),
            },
            other => TrajectoryError::InfeasibleStart(other),
        });
    }

    let rate_of = |t: &Trajectory| {
        average_rate(t, power, scenario).map_err(|_| TrajectoryError::Shape {
            slots: scenario.num_slots,
            waypoints: t.points.len(),
            powers: power.powers.len(),
        })
    };
    let mut current = init.clone();
    let mut value = rate_of(&current)?;
    let mut out = ScaOutcome {
        trajectory: init.clone(),
        history: vec![value],
        residuals: vec![report.worst_scaled_residual()],
        rounds: 0,
        newton_steps: 0,
        hit_round_cap: false,
        hit_newton_cap: false,
    };

    for round in 0..opts.max_sca_iters {
        let model = build_p31(power, &current, scenario, opts)?;
        let sub = solve_p31(&model, opts)?;
        out.rounds = round + 1;
        out.newton_steps += sub.newton_steps;
        out.hit_newton_cap |= sub.capped;

        let next_value = rate_of(&sub.trajectory)?;
        if next_value < value {
            // minorization guarantees ascent; only rounding can land here
            out.history.push(value);
            out.residuals.push(*out.residuals.last().unwrap_or(&0.0));
            break;
        }
        let change = next_value - value;
        current = sub.trajectory;
        value = next_value;
        out.history.push(value);
        out.residuals.push(
            check_feasibility(&current, power, scenario, opts.feasibility_tol)
                .worst_scaled_residual(),
        );
        if change <= opts.sca_tol * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if round + 1 == opts.max_sca_iters {
            out.hit_round_cap = true;
        }
    }
    out.trajectory = current;
    Ok(out)
}
