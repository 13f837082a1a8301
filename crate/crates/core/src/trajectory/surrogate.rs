//! Concave/convex surrogates of the trajectory subproblem around a reference
//! trajectory.

use std::f64::consts::LOG2_E;

use crate::model::{Point, PowerAllocation, Scenario, Trajectory};
use crate::options::SolverOptions;

use super::TrajectoryError;

/// Affine lower bound `r0 − c·α` of the rate as a function of the squared
/// horizontal distance `α = ‖q − w‖²`, tangent at `α0 = ‖q_ref − w‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBound {
    pub r0: f64,
    pub c: f64,
}

impl RateBound {
    pub fn eval(&self, sq_dist: f64) -> f64 {
        self.r0 - self.c * sq_dist
    }
}

/// First-order expansion of `log2(1 + η0 p/(H² + α))` in `α` at the
/// reference point. The rate is convex in `α`, so the tangent is a global
/// under-estimator. Both denominators are taken at the expansion point.
pub fn linearized_rate_bound(p: f64, q_ref: &Point, scenario: &Scenario) -> RateBound {
    if p <= 0.0 {
        return RateBound { r0: 0.0, c: 0.0 };
    }
    let alpha0 = (q_ref - scenario.sr_pos).norm_squared();
    let d2 = scenario.altitude_sq() + alpha0;
    let c = rate_slope(p, d2, scenario);
    let rate = (scenario.eta0() * p / d2).ln_1p() * LOG2_E;
    RateBound { r0: rate + c * alpha0, c }
}

/// `−∂R/∂α` at `H² + α = d2`.
fn rate_slope(p: f64, d2: f64, scenario: &Scenario) -> f64 {
    let snr = scenario.eta0() * p;
    snr * LOG2_E / (d2 * (d2 + snr))
}

/// Gradient of the rate in the horizontal UAV position.
pub fn rate_gradient(p: f64, q: &Point, scenario: &Scenario) -> Point {
    if p <= 0.0 {
        return Point::zeros();
    }
    let x = q - scenario.sr_pos;
    let d2 = scenario.altitude_sq() + x.norm_squared();
    x * (-2.0 * rate_slope(p, d2, scenario))
}

/// Tangent-plane minorant of `‖q − w_k‖²` at `q_ref`.
pub fn linearized_sq_distance(q: &Point, q_ref: &Point, w_k: &Point) -> f64 {
    let g = q_ref - w_k;
    g.norm_squared() + 2.0 * g.dot(&(q - q_ref))
}

/// Interference-cap row of the convex subproblem, normalized so that the
/// constraint reads `Σ_n u[n] / t[n](q[n]) ≤ 1` with
/// `t[n](q) = H² + ‖q_ref[n] − w_k‖² + 2 (q_ref[n] − w_k)ᵀ(q − q_ref[n])`.
#[derive(Debug, Clone)]
pub struct CapRow {
    pub receiver: usize,
    /// `β0 p[n] / (N Γ_k)`, index `n − 1` for slot `n`.
    pub weight: Vec<f64>,
    /// `H² + ‖q_ref[n] − w_k‖²`.
    pub t_ref: Vec<f64>,
    /// `q_ref[n] − w_k`.
    pub tangent: Vec<Point>,
}

impl CapRow {
    pub fn t_at(&self, slot: usize, q: &Point, q_ref: &Point) -> f64 {
        let i = slot - 1;
        self.t_ref[i] + 2.0 * self.tangent[i].dot(&(q - q_ref))
    }
}

/// Convex surrogate of the trajectory subproblem at a reference trajectory.
/// Decision variables are the interior waypoints `q[1..N−1]`.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub sr_pos: Point,
    pub max_step: f64,
    pub t_floor: f64,
    /// Rate bounds per slot, index `n − 1` for slot `n`.
    pub bounds: Vec<RateBound>,
    pub caps: Vec<CapRow>,
    pub reference: Trajectory,
}

impl SurrogateModel {
    pub fn num_slots(&self) -> usize {
        self.bounds.len()
    }

    /// `(1/N) Σ (r0[n] − c[n] ‖q[n] − w‖²)`
    pub fn objective(&self, traj: &Trajectory) -> f64 {
        let n = self.num_slots() as f64;
        self.bounds
            .iter()
            .zip(&traj.points[1..])
            .map(|(b, q)| b.eval((q - self.sr_pos).norm_squared()))
            .sum::<f64>()
            / n
    }

    /// Gradient of [`SurrogateModel::objective`] per slot `1..=N`.
    pub fn objective_gradient(&self, traj: &Trajectory) -> Vec<Point> {
        let n = self.num_slots() as f64;
        self.bounds
            .iter()
            .zip(&traj.points[1..])
            .map(|(b, q)| (q - self.sr_pos) * (-2.0 * b.c / n))
            .collect()
    }

    /// Gradient of the usage `Σ u[n]/t[n]` of cap row `k` per slot `1..=N`.
    pub fn cap_gradient(&self, k: usize, traj: &Trajectory) -> Vec<Point> {
        let row = &self.caps[k];
        (1..=self.num_slots())
            .map(|slot| {
                let u = row.weight[slot - 1];
                if u == 0.0 {
                    return Point::zeros();
                }
                let t = row.t_at(slot, &traj.points[slot], &self.reference.points[slot]);
                row.tangent[slot - 1] * (-2.0 * u / (t * t))
            })
            .collect()
    }

    /// Normalized cap usage `Σ u[n]/t[n]` per row; `None` where some
    /// transmitting slot falls below the `t_floor` domain bound.
    pub fn cap_usage(&self, traj: &Trajectory) -> Vec<Option<f64>> {
        self.caps
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                for slot in 1..=self.num_slots() {
                    let u = row.weight[slot - 1];
                    if u == 0.0 {
                        continue;
                    }
                    let t = row.t_at(slot, &traj.points[slot], &self.reference.points[slot]);
                    if t < self.t_floor {
                        return None;
                    }
                    acc += u / t;
                }
                Some(acc)
            })
            .collect()
    }

    /// Largest violation over speed (relative to `V`) and cap rows
    /// (relative to 1). Non-positive means feasible.
    pub fn max_violation(&self, traj: &Trajectory) -> f64 {
        let v = self.max_step;
        let speed = traj
            .points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm() / v - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        self.cap_usage(traj)
            .into_iter()
            .map(|u| u.map_or(f64::INFINITY, |x| x - 1.0))
            .fold(speed, f64::max)
    }
}

/// Builds the convex surrogate around `q_ref` for fixed `power`.
pub fn build_p31(
    power: &PowerAllocation,
    q_ref: &Trajectory,
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<SurrogateModel, TrajectoryError> {
    let n = scenario.num_slots;
    if q_ref.points.len() != n + 1 || power.powers.len() != n {
        return Err(TrajectoryError::Shape {
            slots: n,
            waypoints: q_ref.points.len(),
            powers: power.powers.len(),
        });
    }
    let v = scenario.max_step();
    for (i, w) in q_ref.points.windows(2).enumerate() {
        let step = (w[1] - w[0]).norm();
        if step > v * (1.0 + opts.feasibility_tol) {
            return Err(TrajectoryError::SpeedViolation { slot: i + 1, step, limit: v });
        }
    }
    for (which, got, want) in [
        ("initial", q_ref.points[0], scenario.q_init),
        ("final", q_ref.points[n], scenario.q_final),
    ] {
        if (got - want).norm() > crate::model::ENDPOINT_TOL_M {
            return Err(TrajectoryError::Endpoint { which, offset: (got - want).norm() });
        }
    }

    let bounds = power
        .powers
        .iter()
        .zip(&q_ref.points[1..])
        .map(|(&p, q)| linearized_rate_bound(p, q, scenario))
        .collect();

    let h2 = scenario.altitude_sq();
    let mut caps = Vec::new();
    for (k, (wk, &gamma)) in scenario.pr_positions.iter().zip(&scenario.it_limits).enumerate() {
        if !gamma.is_finite() || power.powers.iter().all(|&p| p == 0.0) {
            continue;
        }
        if gamma == 0.0 {
            return Err(TrajectoryError::ZeroCapWithPower { receiver: k });
        }
        let weight = power
            .powers
            .iter()
            .map(|p| scenario.ref_gain * p / (n as f64 * gamma))
            .collect();
        let tangent: Vec<Point> = q_ref.points[1..].iter().map(|q| q - wk).collect();
        let t_ref = tangent.iter().map(|g| h2 + g.norm_squared()).collect();
        caps.push(CapRow { receiver: k, weight, t_ref, tangent });
    }

    Ok(SurrogateModel {
        sr_pos: scenario.sr_pos,
        max_step: v,
        t_floor: opts.t_floor,
        bounds,
        caps,
        reference: q_ref.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rate;
    use nalgebra::Vector2;

    #[test]
    fn zero_power_bound_is_zero() {
        let s = Scenario::reference();
        let b = linearized_rate_bound(0.0, &Vector2::new(3.0, 4.0), &s);
        assert_eq!((b.r0, b.c), (0.0, 0.0));
    }

    #[test]
    fn bound_tight_at_reference() {
        let s = Scenario::reference();
        let q = Vector2::new(-320.0, 75.0);
        let b = linearized_rate_bound(0.4, &q, &s);
        let exact = rate(0.4, &q, &s).unwrap();
        assert!((b.eval((q - s.sr_pos).norm_squared()) - exact).abs() <= 1e-12);
        assert!(b.c > 0.0);
    }

    #[test]
    fn minorant_tangency() {
        let w = Vector2::new(-500.0, 500.0);
        let r = Vector2::new(10.0, 20.0);
        assert_eq!(linearized_sq_distance(&r, &r, &w), (r - w).norm_squared());
        // degenerate tangent point: minorant vanishes identically
        assert_eq!(linearized_sq_distance(&Vector2::new(7.0, -3.0), &w, &w), 0.0);
    }

    #[test]
    fn reference_is_feasible_for_surrogate() {
        let s = Scenario::reference();
        let traj = Trajectory::straight_line(&s);
        let opts = SolverOptions::default();
        let sol = crate::power::solve_power(&traj, &s, &opts).unwrap();
        let m = build_p31(&sol.power, &traj, &s, &opts).unwrap();
        assert!(m.max_violation(&traj) <= 0.0);
        let exact = crate::model::average_rate(&traj, &sol.power, &s).unwrap();
        assert!((m.objective(&traj) - exact).abs() <= 1e-12);
        for (b, p) in m.bounds.iter().zip(&sol.power.powers) {
            assert_eq!(b.c > 0.0, *p > 0.0);
        }
    }

    #[test]
    fn rejects_fast_reference() {
        let s = Scenario::reference();
        let mut traj = Trajectory::straight_line(&s);
        traj.points[5] += Vector2::new(200.0, 0.0);
        let err = build_p31(
            &PowerAllocation::zeros(s.num_slots),
            &traj,
            &s,
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, TrajectoryError::SpeedViolation { slot: 5, .. }));
    }
}
