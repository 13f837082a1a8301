//! The three benchmark schemes: trajectory optimization at constant power,
//! power optimization on the straight line, and power optimization on a
//! fly-hover-fly path.

use crate::alternating::{straight_line_trajectory, SolveError};
use crate::model::{
    channel_gain_pr, ConvergenceRecord, IterationCounts, Point, PowerAllocation, Scenario,
    Solution, SolverFlag, Stage, Trajectory,
};
use crate::options::SolverOptions;
use crate::power::{solve_power, INTERFERENCE_MARGIN};
use crate::trajectory::sca_trajectory;

/// Relative slack when counting how many whole slots a leg needs.
const SLOT_ROUNDING: f64 = 1e-9;

/// Algorithm 1 on the trajectory with `p[n] = p` fixed. Uses `p = P` when
/// the straight line satisfies every interference cap at that level,
/// otherwise the largest constant power that keeps the straight-line start
/// feasible.
pub fn trajectory_opt_constant_power(
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    scenario.validate()?;
    opts.validate()?;
    let origin = scenario.sr_pos;
    let local = scenario.translated(-origin);
    let line = straight_line_trajectory(&local)?;
    let n = local.num_slots;

    let mut flags = Vec::new();
    let level = constant_power_level(&line, &local);
    if level <= 0.0 {
        flags.push(SolverFlag::ConstantPowerZero);
        let mut sol = Solution::evaluate(line, PowerAllocation::zeros(n), &local)?;
        sol.objective_history = vec![0.0];
        sol.flags = flags;
        return finish(sol, scenario, opts, origin);
    }
    if level < local.avg_power_limit {
        flags.push(SolverFlag::ConstantPowerReduced { power: level });
    }

    let power = PowerAllocation::constant(n, level);
    let sca = sca_trajectory(&power, &line, &local, opts)?;
    if sca.hit_newton_cap {
        flags.push(SolverFlag::BarrierIterationCap);
    }
    if sca.hit_round_cap {
        flags.push(SolverFlag::ScaIterationCap);
    }
    let convergence = sca
        .history
        .iter()
        .zip(&sca.residuals)
        .enumerate()
        .map(|(inner, (&objective, &max_residual))| ConvergenceRecord {
            stage: if inner == 0 { Stage::Init } else { Stage::Sca },
            outer: 1,
            inner,
            objective,
            max_residual,
        })
        .collect();
    let mut sol = Solution::evaluate(sca.trajectory, power, &local)?;
    sol.objective_history = sca.history;
    sol.convergence = convergence;
    sol.iterations =
        IterationCounts { outer: 1, sca: sca.rounds, newton: sca.newton_steps, dual: 0 };
    sol.flags = flags;
    finish(sol, scenario, opts, origin)
}

/// Largest constant power, capped at `P`, under which `traj` meets every
/// interference cap (held [`INTERFERENCE_MARGIN`] inside the limit).
pub fn constant_power_level(traj: &Trajectory, scenario: &Scenario) -> f64 {
    let n = scenario.num_slots as f64;
    let mut level = scenario.avg_power_limit;
    for (k, &gamma) in scenario.it_limits.iter().enumerate() {
        if gamma.is_infinite() {
            continue;
        }
        let avg_gain = traj.points[1..].iter().map(|q| channel_gain_pr(q, k, scenario)).sum::<f64>() / n;
        let cap = gamma * (1.0 - INTERFERENCE_MARGIN) / avg_gain;
        if cap < level {
            level = cap;
        }
    }
    level.max(0.0)
}

/// Power optimization on the constant-speed straight line.
pub fn power_opt_straight_line(
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    scenario.validate()?;
    opts.validate()?;
    let line = straight_line_trajectory(scenario)?;
    power_only(line, scenario, opts, Vec::new())
}

/// Power optimization on the fly-hover-fly path. Falls back to the straight
/// line, with [`SolverFlag::FlyHoverFlyFallback`], when the mission is too
/// short to reach the SR and leave again at full speed.
pub fn power_opt_fly_hover_fly(
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    scenario.validate()?;
    opts.validate()?;
    let (traj, fallback) = fly_hover_fly_trajectory(scenario);
    let flags = if fallback { vec![SolverFlag::FlyHoverFlyFallback] } else { Vec::new() };
    let traj = match traj {
        Some(t) => t,
        None => straight_line_trajectory(scenario)?,
    };
    power_only(traj, scenario, opts, flags)
}

/// Full speed from `q_I` to the SR, hover, then full speed to `q_F`, on the
/// slot grid. Each leg takes the fewest whole slots that cover it; the first
/// leg puts its short step last and the second leg puts it first, so every
/// hover waypoint sits exactly above the SR. Returns `(None, true)` when the
/// legs need more than `N` slots.
pub fn fly_hover_fly_trajectory(scenario: &Scenario) -> (Option<Trajectory>, bool) {
    let n = scenario.num_slots;
    let step = scenario.max_step();
    let w = scenario.sr_pos;
    let (qi, qf) = (scenario.q_init, scenario.q_final);
    let (d1, d2) = ((w - qi).norm(), (qf - w).norm());
    let (l1, l2) = (leg_slots(d1, step), leg_slots(d2, step));
    if l1 + l2 > n {
        return (None, true);
    }
    let toward = |from: Point, to: Point, dist: f64, along: f64| -> Point {
        if dist == 0.0 {
            from
        } else {
            from + (to - from) * (along / dist)
        }
    };
    let mut points = Vec::with_capacity(n + 1);
    for i in 0..=l1 {
        points.push(if i == l1 { w } else { toward(qi, w, d1, (i as f64 * step).min(d1)) });
    }
    points.resize(n - l2 + 1, w);
    for j in 1..=l2 {
        let along = (d2 - (l2 - j) as f64 * step).max(0.0);
        points.push(if j == l2 { qf } else { toward(w, qf, d2, along) });
    }
    (Some(Trajectory { points }), false)
}

fn leg_slots(dist: f64, step: f64) -> usize {
    if dist == 0.0 {
        return 0;
    }
    (dist / step - SLOT_ROUNDING * (dist / step).max(1.0)).ceil().max(1.0) as usize
}

fn power_only(
    traj: Trajectory,
    scenario: &Scenario,
    opts: &SolverOptions,
    mut flags: Vec<SolverFlag>,
) -> Result<Solution, SolveError> {
    let sol = solve_power(&traj, scenario, opts)?;
    if sol.capped {
        flags.push(SolverFlag::PowerIterationCap);
    }
    let mut out = Solution::evaluate(traj, sol.power, scenario)?;
    out.objective_history = vec![out.avg_rate];
    out.convergence = vec![ConvergenceRecord {
        stage: Stage::Power,
        outer: 1,
        inner: 0,
        objective: out.avg_rate,
        max_residual: out.feasibility(scenario, opts.feasibility_tol).worst_scaled_residual(),
    }];
    out.iterations = IterationCounts { outer: 1, sca: 0, newton: 0, dual: sol.iterations };
    out.flags = flags;
    finish(out, scenario, opts, Point::zeros())
}

fn finish(
    sol: Solution,
    scenario: &Scenario,
    opts: &SolverOptions,
    offset: Point,
) -> Result<Solution, SolveError> {
    let sol = sol.translated(offset);
    let report = sol.feasibility(scenario, opts.feasibility_tol);
    if let Some(bad) = report.violations().next() {
        return Err(SolveError::Infeasible(format!("{:?}", bad.constraint)));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fly_hover_fly_reference_geometry() {
        let s = Scenario::reference();
        let (traj, fallback) = fly_hover_fly_trajectory(&s);
        let traj = traj.unwrap();
        assert!(!fallback);
        assert_eq!(traj.points.len(), 201);
        // 1414.21 m at 50 m per slot: 29 slots per leg, 142 hover slots
        let hovering = traj.points.iter().filter(|q| q.norm() == 0.0).count();
        assert_eq!(hovering, 201 - 2 * 29);
        assert_eq!(traj.points[0], s.q_init);
        assert_eq!(traj.points[200], s.q_final);
        for d in traj.step_lengths() {
            assert!(d <= s.max_step() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn fly_hover_fly_exact_leg_time_has_no_hover() {
        let mut s = Scenario::reference();
        s.q_init = Point::new(-1000.0, 0.0);
        s.q_final = Point::new(1000.0, 0.0);
        s.duration = 40.0;
        s.num_slots = 40;
        let (traj, fallback) = fly_hover_fly_trajectory(&s);
        let traj = traj.unwrap();
        assert!(!fallback);
        assert_eq!(traj.points.iter().filter(|q| q.norm() == 0.0).count(), 1);
        for d in traj.step_lengths() {
            assert!((d - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fly_hover_fly_short_mission_falls_back() {
        let mut s = Scenario::reference();
        s.duration = 57.0;
        s.num_slots = 57;
        let (traj, fallback) = fly_hover_fly_trajectory(&s);
        assert!(traj.is_none() && fallback);
        let sol = power_opt_fly_hover_fly(&s, &SolverOptions::default()).unwrap();
        assert_eq!(sol.flags, vec![SolverFlag::FlyHoverFlyFallback]);
        assert_eq!(sol.trajectory, Trajectory::straight_line(&s));
    }

    #[test]
    fn constant_level_is_budget_without_caps() {
        let mut s = Scenario::reference();
        s.it_limits = vec![f64::INFINITY; 2];
        let line = Trajectory::straight_line(&s);
        assert_eq!(constant_power_level(&line, &s), 1.0);
    }

    #[test]
    fn constant_level_meets_caps_on_line() {
        let s = Scenario::reference();
        let line = Trajectory::straight_line(&s);
        let p = constant_power_level(&line, &s);
        assert!(p > 0.0 && p < 1.0);
        let sol = Solution::evaluate(line, PowerAllocation::constant(200, p), &s).unwrap();
        for (i, g) in sol.avg_interference.iter().zip(&s.it_limits) {
            assert!(i <= g);
        }
        // slot N sits nearer the second receiver than slot 0 does to the first
        assert!(sol.avg_interference[1] > s.it_limits[1] * (1.0 - 1e-8));
    }

    #[test]
    fn zero_cap_gives_silent_line() {
        let mut s = Scenario::reference();
        s.it_limits[1] = 0.0;
        let sol = trajectory_opt_constant_power(&s, &SolverOptions::default()).unwrap();
        assert_eq!(sol.flags, vec![SolverFlag::ConstantPowerZero]);
        assert_eq!(sol.avg_rate, 0.0);
    }
}
