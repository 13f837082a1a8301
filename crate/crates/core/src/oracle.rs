//! Brute-force and numerical checks used to verify the solvers. Everything
//! here is written against the link formulas in [`crate::model`] rather
//! than against solver internals.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{channel_gain_pr, channel_gain_sr, rate, Point, PowerAllocation, Scenario, Trajectory};
use crate::trajectory::linearized_rate_bound;

/// Best point of the grid `{0, res, 2·res, …}^N` under the average-power and
/// interference constraints, and its average rate.
///
/// The first `N − 1` coordinates are enumerated; since the rate increases in
/// every power, the last coordinate is the largest grid value that keeps
/// the point feasible, which is the same maximum an exhaustive scan finds.
/// Ties keep the first point in lexicographic order. Intended for `N ≤ 4`.
pub fn grid_search_power(
    traj: &Trajectory,
    scenario: &Scenario,
    resolution: f64,
) -> (PowerAllocation, f64) {
    assert!(resolution > 0.0, "resolution must be positive");
    let n = scenario.num_slots;
    assert!((1..=4).contains(&n), "grid search is limited to 1..=4 slots");
    let k_all = scenario.num_prs();
    let q = &traj.points[1..];
    let budget = n as f64 * scenario.avg_power_limit;
    let caps: Vec<f64> = scenario.it_limits.iter().map(|g| n as f64 * g).collect();
    let gains: Vec<Vec<f64>> =
        (0..k_all).map(|k| q.iter().map(|p| channel_gain_pr(p, k, scenario)).collect()).collect();
    let levels = (budget / resolution + 1e-9).floor() as usize;
    let grid = |i: usize| i as f64 * resolution;
    // rate tables per slot, indexed by grid level
    let table: Vec<Vec<f64>> = q
        .iter()
        .map(|qn| (0..=levels).map(|i| rate(grid(i), qn, scenario).unwrap_or(0.0)).collect())
        .collect();

    let mut best = (vec![0usize; n], f64::NEG_INFINITY);
    let mut idx = vec![0usize; n - 1];
    loop {
        let prefix_power: f64 = idx.iter().map(|&i| grid(i)).sum();
        let mut feasible = prefix_power <= budget * (1.0 + 1e-12);
        let mut room = budget - prefix_power;
        for k in 0..k_all {
            if caps[k].is_infinite() {
                continue;
            }
            let used: f64 = idx.iter().enumerate().map(|(s, &i)| gains[k][s] * grid(i)).sum();
            if used > caps[k] {
                feasible = false;
            }
            room = room.min((caps[k] - used) / gains[k][n - 1]);
        }
        if feasible && room >= 0.0 {
            let mut last = ((room / resolution) + 1e-9).floor() as usize;
            last = last.min(levels);
            // undo rounding that lands just outside a constraint
            while last > 0 && !grid_point_feasible(&idx, last, &gains, &caps, budget, resolution) {
                last -= 1;
            }
            let value: f64 = idx.iter().enumerate().map(|(s, &i)| table[s][i]).sum::<f64>()
                + table[n - 1][last];
            if value > best.1 {
                let mut point = idx.clone();
                point.push(last);
                best = (point, value);
            }
        }
        // next prefix in lexicographic order
        let mut pos = n - 1;
        loop {
            if pos == 0 {
                let powers = best.0.iter().map(|&i| grid(i)).collect();
                return (PowerAllocation { powers }, best.1 / n as f64);
            }
            pos -= 1;
            idx[pos] += 1;
            let used: f64 = idx[..=pos].iter().map(|&i| grid(i)).sum();
            if used <= budget * (1.0 + 1e-12) {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn grid_point_feasible(
    prefix: &[usize],
    last: usize,
    gains: &[Vec<f64>],
    caps: &[f64],
    budget: f64,
    resolution: f64,
) -> bool {
    let p = |s: usize| if s < prefix.len() { prefix[s] } else { last } as f64 * resolution;
    let n = prefix.len() + 1;
    if (0..n).map(p).sum::<f64>() > budget * (1.0 + 1e-12) {
        return false;
    }
    gains.iter().zip(caps).all(|(g, &cap)| (0..n).map(|s| g[s] * p(s)).sum::<f64>() <= cap)
}

/// Upper bound on how far the grid optimum can fall below the continuous
/// optimum: each power moves by less than `res` when rounded down and the
/// slot rate has slope at most `a[n]·log2 e` in the power.
pub fn grid_resolution_bound(traj: &Trajectory, scenario: &Scenario, resolution: f64) -> f64 {
    let n = scenario.num_slots as f64;
    let slope: f64 = traj.points[1..]
        .iter()
        .map(|q| channel_gain_sr(q, scenario) / scenario.noise_power)
        .sum();
    resolution * std::f64::consts::LOG2_E * slope / n
}

/// A one-free-waypoint instance of the convex trajectory subproblem: slots
/// 1 and 2, with `q[0]` and `q[2]` fixed and `q[1]` free.
#[derive(Debug, Clone)]
pub struct WaypointInstance {
    /// Must have `num_slots == 2`.
    pub scenario: Scenario,
    pub powers: [f64; 2],
    /// Reference trajectory `[q0, q1_ref, q2]`.
    pub reference: [Point; 3],
    pub t_floor: f64,
}

impl WaypointInstance {
    /// Surrogate objective `(1/2) Σ_n (r0[n] − c[n]‖q[n] − w‖²)` with `q[1]`
    /// replaced by `q1`.
    pub fn objective(&self, q1: &Point) -> f64 {
        let s = &self.scenario;
        let w = s.sr_pos;
        let slot = |p: f64, q: &Point, q_ref: &Point| {
            if p <= 0.0 {
                return 0.0;
            }
            let d_ref = s.altitude_sq() + (q_ref - w).norm_squared();
            let snr = s.eta0() * p;
            let r_ref = (1.0 + snr / d_ref).log2();
            let slope = snr / (d_ref * (d_ref + snr)) / std::f64::consts::LN_2;
            r_ref - slope * ((q - w).norm_squared() - (q_ref - w).norm_squared())
        };
        let [_, r1, r2] = &self.reference;
        (slot(self.powers[0], q1, r1) + slot(self.powers[1], r2, r2)) / 2.0
    }

    /// Whether `q1` meets both speed limits and every linearized
    /// interference cap.
    pub fn feasible(&self, q1: &Point) -> bool {
        let s = &self.scenario;
        let v = s.max_step();
        let [q0, r1, q2] = &self.reference;
        if (q1 - q0).norm() > v || (q2 - q1).norm() > v {
            return false;
        }
        s.pr_positions.iter().zip(&s.it_limits).all(|(wk, &gamma)| {
            if gamma.is_infinite() {
                return true;
            }
            let mut total = 0.0;
            for (p, q, q_ref) in [(self.powers[0], q1, r1), (self.powers[1], q2, q2)] {
                if p <= 0.0 {
                    continue;
                }
                let lin = (q_ref - wk).norm_squared() + 2.0 * (q_ref - wk).dot(&(q - q_ref));
                let t = s.altitude_sq() + lin;
                if t < self.t_floor {
                    return false;
                }
                total += s.ref_gain * p / t;
            }
            total / 2.0 <= gamma
        })
    }
}

/// Scans a square grid of spacing `resolution` around `q[0]` and returns
/// the feasible point with the best surrogate objective; ties keep the first
/// point in x-major scan order.
pub fn grid_search_waypoint(instance: &WaypointInstance, resolution: f64) -> Option<Point> {
    assert!(resolution > 0.0, "resolution must be positive");
    let v = instance.scenario.max_step();
    let center = instance.reference[0];
    let steps = (v / resolution).ceil() as i64;
    let mut best: Option<(Point, f64)> = None;
    for i in -steps..=steps {
        for j in -steps..=steps {
            let q = center + Vector2::new(i as f64, j as f64) * resolution;
            if !instance.feasible(&q) {
                continue;
            }
            let value = instance.objective(&q);
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((q, value));
            }
        }
    }
    best.map(|(q, _)| q)
}

/// Central differences of `f` at `q` with step `h` per coordinate.
pub fn finite_diff_gradient<F: Fn(&Point) -> f64>(f: F, q: &Point, h: f64) -> Point {
    assert!(h > 0.0, "step must be positive");
    let dx = Vector2::new(h, 0.0);
    let dy = Vector2::new(0.0, h);
    Vector2::new((f(&(q + dx)) - f(&(q - dx))) / (2.0 * h), (f(&(q + dy)) - f(&(q - dy))) / (2.0 * h))
}

/// True rate minus its linearized lower bound at `q`, expanded at `q_ref`.
pub fn bound_gap(p: f64, q: &Point, q_ref: &Point, scenario: &Scenario) -> f64 {
    let exact = rate(p, q, scenario).expect("power must be non-negative");
    let bound = linearized_rate_bound(p, q_ref, scenario);
    exact - bound.eval((q - scenario.sr_pos).norm_squared())
}

/// Seeded random instance: SR, receivers and waypoints uniform in a 2 km
/// square, caps log-uniform in `[1e−12, 1e−8]` W, other constants as in the
/// reference scenario. Waypoints form a random walk whose steps respect the
/// speed limit.
pub fn random_instance(seed: u64, num_slots: usize, num_prs: usize) -> (Scenario, Trajectory) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| {
        Vector2::new(rng.gen_range(-1000.0..1000.0), rng.gen_range(-1000.0..1000.0))
    };
    let mut s = Scenario::reference();
    s.num_slots = num_slots;
    s.duration = 10.0 * num_slots as f64;
    s.sr_pos = point(&mut rng);
    s.pr_positions = (0..num_prs).map(|_| point(&mut rng)).collect();
    s.it_limits = (0..num_prs).map(|_| 10f64.powf(rng.gen_range(-12.0..-8.0))).collect();
    let step = s.max_step();
    let mut points = vec![point(&mut rng)];
    for _ in 0..num_slots {
        let last = *points.last().expect("non-empty");
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let len = step * rng.gen_range(0.0..1.0f64).sqrt();
        points.push(last + Vector2::new(angle.cos(), angle.sin()) * len);
    }
    s.q_init = points[0];
    s.q_final = points[num_slots];
    (s, Trajectory { points })
}
