use serde::Serialize;

use super::{channel_gain_pr, PowerAllocation, Scenario, Trajectory};

/// Absolute tolerance in meters for the endpoint equalities.
pub const ENDPOINT_TOL_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// Waypoint/power vector lengths do not match `N`.
    Shape,
    InitialPoint,
    FinalPoint,
    /// Displacement of slot `slot` (1-based) against `V`.
    Speed { slot: usize },
    NonNegative { slot: usize },
    AveragePower,
    Interference { receiver: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub constraint: Constraint,
    /// Signed residual in the constraint's natural unit (m, W). Positive means violated.
    pub residual: f64,
    /// Allowed slack in the same unit.
    pub allowance: f64,
    pub satisfied: bool,
}

impl ConstraintCheck {
    fn new(constraint: Constraint, residual: f64, allowance: f64) -> Self {
        ConstraintCheck { constraint, residual, allowance, satisfied: residual <= allowance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.checks.iter().all(|c| c.satisfied)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.satisfied)
    }

    /// The check with the largest residual-to-scale ratio.
    pub fn worst(&self) -> Option<&ConstraintCheck> {
        self.checks.iter().max_by(|a, b| {
            scaled(a).partial_cmp(&scaled(b)).unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    pub fn worst_scaled_residual(&self) -> f64 {
        self.worst().map(scaled).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn find(&self, constraint: Constraint) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.constraint == constraint)
    }
}

fn scaled(c: &ConstraintCheck) -> f64 {
    if c.allowance > 0.0 {
        c.residual / c.allowance
    } else if c.residual > 0.0 {
        f64::INFINITY
    } else {
        c.residual
    }
}

/// Evaluates every constraint of the joint problem. Inequalities use a
/// relative slack `tol` on their right-hand side; endpoints use
/// [`ENDPOINT_TOL_M`].
pub fn check_feasibility(
    traj: &Trajectory,
    power: &PowerAllocation,
    scenario: &Scenario,
    tol: f64,
) -> FeasibilityReport {
    let n = scenario.num_slots;
    let mut checks = Vec::new();
    if traj.points.len() != n + 1 || power.powers.len() != n {
        let off = traj.points.len().abs_diff(n + 1) + power.powers.len().abs_diff(n);
        checks.push(ConstraintCheck::new(Constraint::Shape, off as f64, 0.0));
        return FeasibilityReport { checks };
    }

    let pts = &traj.points;
    checks.push(ConstraintCheck::new(
        Constraint::InitialPoint,
        (pts[0] - scenario.q_init).norm(),
        ENDPOINT_TOL_M,
    ));
    checks.push(ConstraintCheck::new(
        Constraint::FinalPoint,
        (pts[n] - scenario.q_final).norm(),
        ENDPOINT_TOL_M,
    ));

    let v = scenario.max_step();
    for slot in 1..=n {
        let step = (pts[slot] - pts[slot - 1]).norm();
        checks.push(ConstraintCheck::new(Constraint::Speed { slot }, step - v, tol * v));
    }

    let p_lim = scenario.avg_power_limit;
    for (i, &p) in power.powers.iter().enumerate() {
        checks.push(ConstraintCheck::new(Constraint::NonNegative { slot: i + 1 }, -p, 0.0));
    }
    let avg_p = power.powers.iter().sum::<f64>() / n as f64;
    checks.push(ConstraintCheck::new(Constraint::AveragePower, avg_p - p_lim, tol * p_lim));

    for (k, &gamma) in scenario.it_limits.iter().enumerate() {
        let avg_i = power
            .powers
            .iter()
            .zip(&pts[1..])
            .map(|(&p, q)| p * channel_gain_pr(q, k, scenario))
            .sum::<f64>()
            / n as f64;
        let allowance = if gamma.is_finite() { tol * gamma } else { f64::INFINITY };
        checks.push(ConstraintCheck::new(
            Constraint::Interference { receiver: k },
            avg_i - gamma,
            allowance,
        ));
    }
    FeasibilityReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn zero_power_straight_line_is_feasible() {
        let s = Scenario::reference();
        let traj = Trajectory::straight_line(&s);
        let power = PowerAllocation::zeros(s.num_slots);
        assert!(check_feasibility(&traj, &power, &s, 1e-6).is_feasible());
    }

    #[test]
    fn moved_endpoint_flagged() {
        let s = Scenario::reference();
        let mut traj = Trajectory::straight_line(&s);
        traj.points[s.num_slots] += Vector2::new(1.0, 0.0);
        let report = check_feasibility(&traj, &PowerAllocation::zeros(s.num_slots), &s, 1e-6);
        let bad: Vec<_> = report.violations().map(|c| c.constraint).collect();
        assert_eq!(bad, vec![Constraint::FinalPoint]);
    }

    #[test]
    fn hovering_full_power_violates_caps() {
        let mut s = Scenario::reference();
        s.num_slots = 4;
        s.q_init = Vector2::zeros();
        s.q_final = Vector2::zeros();
        let traj = Trajectory { points: vec![Vector2::zeros(); 5] };
        let power = PowerAllocation { powers: vec![1.0; 4] };
        let report = check_feasibility(&traj, &power, &s, 1e-6);
        for k in 0..2 {
            let c = report.find(Constraint::Interference { receiver: k }).unwrap();
            assert!(!c.satisfied);
            // 1e-3 / 510000 - 1e-9
            assert!((c.residual - 9.6078e-10).abs() < 1e-13, "{}", c.residual);
        }
        assert!(report.find(Constraint::AveragePower).unwrap().satisfied);
    }

    #[test]
    fn feasibility_flips_at_power_boundary() {
        let mut s = Scenario::reference();
        s.pr_positions.clear();
        s.it_limits.clear();
        let traj = Trajectory::straight_line(&s);
        let tol = 1e-6;
        let at = |scale: f64| {
            let power = PowerAllocation { powers: vec![s.avg_power_limit * scale; s.num_slots] };
            check_feasibility(&traj, &power, &s, tol).is_feasible()
        };
        assert!(at(1.0));
        assert!(at(1.0 + 0.9 * tol));
        assert!(!at(1.0 + 1.1 * tol));
    }

    #[test]
    fn speed_violation_flagged() {
        let s = Scenario::reference();
        let mut traj = Trajectory::straight_line(&s);
        traj.points[1] = traj.points[0] + Vector2::new(0.0, 60.0);
        let report = check_feasibility(&traj, &PowerAllocation::zeros(s.num_slots), &s, 1e-6);
        assert!(!report.find(Constraint::Speed { slot: 1 }).unwrap().satisfied);
    }

    #[test]
    fn negative_power_flagged() {
        let s = Scenario::reference();
        let mut power = PowerAllocation::zeros(s.num_slots);
        power.powers[3] = -1e-3;
        let report = check_feasibility(&Trajectory::straight_line(&s), &power, &s, 1e-6);
        assert!(!report.find(Constraint::NonNegative { slot: 4 }).unwrap().satisfied);
    }
}
