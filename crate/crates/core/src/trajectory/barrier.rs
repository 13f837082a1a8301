//! Log-barrier interior-point solver for the convex trajectory surrogate.
//!
//! The Newton system is block tridiagonal (2×2 blocks from the per-slot
//! objective and the speed constraints between neighbouring waypoints) plus
//! one dense rank-one term per interference cap; it is solved with a block
//! Thomas sweep and the Woodbury identity in `O(N K²)`.
//!
//! Line searches compare barrier values in difference form so that the
//! acceptance test stays meaningful when the barrier weight becomes large.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::model::{Point, Trajectory};
use crate::options::SolverOptions;

use super::surrogate::SurrogateModel;
use super::TrajectoryError;

/// Result of one convex trajectory solve.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub trajectory: Trajectory,
    /// Surrogate objective at `trajectory`.
    pub objective: f64,
    /// Surrogate objective at the reference trajectory.
    pub reference_objective: f64,
    pub newton_steps: usize,
    /// Barrier duality-gap bound at exit, bps/Hz.
    pub gap: f64,
    /// Newton decrement of the last centering step.
    pub decrement: f64,
    /// `max_inner_iters` was exhausted.
    pub capped: bool,
}

const ARMIJO: f64 = 0.01;
/// Centering stops once `λ²/2` falls below this fraction of the number of
/// barrier terms; the duality-gap bound then holds up to that fraction.
const CENTERING_TOL: f64 = 1e-8;
const ROUNDOFF: f64 = 1e-14;
const REFINE_STEPS: usize = 4;
const REFINE_TOL: f64 = 1e-14;
/// Starting closer than this to many speed limits makes centering crawl.
const COMFORT_SLACK: f64 = 1e-4;

/// Maximizes the surrogate objective over the interior waypoints. The
/// result is never worse than the reference trajectory.
pub fn solve_p31(
    model: &SurrogateModel,
    opts: &SolverOptions,
) -> Result<SubproblemSolution, TrajectoryError> {
    let reference = &model.reference;
    let reference_objective = model.objective(reference);
    let n = model.num_slots();
    let keep_reference = |newton_steps, capped| SubproblemSolution {
        trajectory: reference.clone(),
        objective: reference_objective,
        reference_objective,
        newton_steps,
        gap: 0.0,
        decrement: 0.0,
        capped,
    };
    if n < 2 || model.bounds.iter().all(|b| b.c == 0.0) {
        return Ok(keep_reference(0, false));
    }

    let Some(start) = interior_start(model) else {
        // the reference sits on the kinematic boundary to machine precision
        log::debug!("no strictly interior start; keeping the reference");
        return Ok(keep_reference(0, false));
    };
    let mut state = Barrier::new(model, start);

    let m = (n + model.caps.len()) as f64;
    let scale = model.bounds.iter().map(|b| b.r0).sum::<f64>() / n as f64;
    let scale = scale.max(f64::MIN_POSITIVE);
    let target_gap = opts.barrier_gap_tol * scale;
    // the barrier minimizes τ·(N·f) − Σ log s, so the gap in f is m/(N τ)
    let mut tau = m / (n as f64 * opts.barrier_initial_gap * scale);
    let mut steps = 0;
    let mut capped = false;
    let mut decrement = f64::INFINITY;
    loop {
        // centering
        loop {
            if steps >= opts.max_inner_iters {
                capped = true;
                break;
            }
            let Some((dir, lambda_sq)) = state.newton_direction(tau) else { break };
            decrement = lambda_sq;
            // below roundoff of the scaled barrier value, steps are noise
            let floor = (CENTERING_TOL * m).max(ROUNDOFF * tau * n as f64 * scale);
            if lambda_sq / 2.0 <= floor {
                break;
            }
            steps += 1;
            if !state.line_search(tau, &dir, -lambda_sq) {
                break;
            }
        }
        let gap = m / (n as f64 * tau);
        log::trace!("centering done: tau {tau:.3e} gap {gap:.3e} steps {steps} decrement {decrement:.3e}");
        if capped || gap <= target_gap {
            break;
        }
        tau *= opts.barrier_decrease;
    }

    let gap = m / (n as f64 * tau);
    let trajectory = Trajectory { points: state.q };
    let objective = model.objective(&trajectory);
    if objective < reference_objective || model.max_violation(&trajectory) > 0.0 {
        let mut out = keep_reference(steps, capped);
        out.gap = gap;
        out.decrement = decrement;
        return Ok(out);
    }
    Ok(SubproblemSolution {
        trajectory,
        objective,
        reference_objective,
        newton_steps: steps,
        gap,
        decrement,
        capped,
    })
}

/// Barrier function `τ·Σ c[n]‖q[n] − w‖² − Σ log(speed slack) − Σ log(cap
/// slack)` minimized by [`solve_p31`], or `None` outside its domain.
pub fn barrier_value(model: &SurrogateModel, traj: &Trajectory, tau: f64) -> Option<f64> {
    Barrier::inside(model, traj).map(|b| b.value(tau))
}

/// Gradient of [`barrier_value`] with respect to the interior waypoints
/// `q[1..N−1]`, the one used by the Newton steps.
pub fn barrier_gradient(
    model: &SurrogateModel,
    traj: &Trajectory,
    tau: f64,
) -> Option<Vec<Vector2<f64>>> {
    Barrier::inside(model, traj).map(|b| b.gradient(tau))
}

/// A strictly feasible starting point. Candidates blend the reference toward
/// the constant-speed straight line, or move only the waypoints that carry
/// no interference toward the chord between their powered neighbours. The
/// smallest blend leaving every speed slack at least `COMFORT_SLACK` wins,
/// otherwise the candidate with the largest speed slack.
fn interior_start(model: &SurrogateModel) -> Option<Vec<Point>> {
    let q_ref = &model.reference.points;
    let n = q_ref.len() - 1;
    let line: Vec<Point> =
        (0..=n).map(|i| q_ref[0] + (q_ref[n] - q_ref[0]) * (i as f64 / n as f64)).collect();
    let anchored = anchored_chords(model);
    let blend = |target: &[Point], theta: f64| -> Vec<Point> {
        let mut q: Vec<Point> =
            q_ref.iter().zip(target).map(|(r, l)| r * (1.0 - theta) + l * theta).collect();
        q[0] = q_ref[0];
        q[n] = q_ref[n];
        q
    };
    let thetas = [0.0, 1e-9, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0];
    let mut fallback: Option<(f64, Vec<Point>)> = None;
    for &theta in &thetas {
        for target in [&line, &anchored] {
            let q = blend(target, theta);
            match Barrier::start_slack(model, &q) {
                Some(s) if s >= COMFORT_SLACK => return Some(q),
                Some(s) if fallback.as_ref().is_none_or(|(best, _)| s > *best) => {
                    fallback = Some((s, q))
                }
                _ => {}
            }
        }
    }
    fallback.map(|(_, q)| q)
}

/// The reference with every run of interference-free interior waypoints
/// replaced by the constant-speed chord between the waypoints around it.
fn anchored_chords(model: &SurrogateModel) -> Vec<Point> {
    let q = &model.reference.points;
    let n = q.len() - 1;
    let fixed = |s: usize| s == 0 || s == n || model.caps.iter().any(|row| row.weight[s - 1] > 0.0);
    let mut out = q.clone();
    let mut left = 0;
    for s in 1..=n {
        if !fixed(s) {
            continue;
        }
        let span = (s - left) as f64;
        for i in left + 1..s {
            out[i] = q[left] + (q[s] - q[left]) * ((i - left) as f64 / span);
        }
        left = s;
    }
    out
}

struct Barrier<'a> {
    model: &'a SurrogateModel,
    q: Vec<Point>,
    /// Speed slacks `1 − ‖Δ_n‖²/V²`, index `n − 1`.
    speed: Vec<f64>,
    /// `t[k][n−1]`
    t: Vec<Vec<f64>>,
    /// Cap slacks `1 − Σ u/t`.
    cap: Vec<f64>,
}

impl<'a> Barrier<'a> {
    fn new(model: &'a SurrogateModel, q: Vec<Point>) -> Self {
        let mut b = Barrier { model, q, speed: Vec::new(), t: Vec::new(), cap: Vec::new() };
        b.refresh();
        b
    }

    fn inside(model: &'a SurrogateModel, traj: &Trajectory) -> Option<Self> {
        Barrier::start_slack(model, &traj.points)?;
        Some(Barrier::new(model, traj.points.clone()))
    }

    /// Smallest speed slack of `q` if it is strictly inside the barrier
    /// domain, `None` otherwise.
    fn start_slack(model: &SurrogateModel, q: &[Point]) -> Option<f64> {
        let v2 = model.max_step * model.max_step;
        let slack = q
            .windows(2)
            .map(|w| 1.0 - (w[1] - w[0]).norm_squared() / v2)
            .fold(f64::INFINITY, f64::min);
        if !(slack > 0.0) {
            return None;
        }
        let traj = Trajectory { points: q.to_vec() };
        let inside = model.cap_usage(&traj).iter().all(|u| matches!(u, Some(x) if *x < 1.0))
            && model.caps.iter().all(|row| {
                (1..q.len()).all(|s| {
                    row.weight[s - 1] == 0.0
                        || row.t_at(s, &q[s], &model.reference.points[s]) > model.t_floor
                })
            });
        inside.then_some(slack)
    }

    fn refresh(&mut self) {
        let v2 = self.model.max_step * self.model.max_step;
        self.speed = self.q.windows(2).map(|w| 1.0 - (w[1] - w[0]).norm_squared() / v2).collect();
        let r = &self.model.reference.points;
        self.t = self
            .model
            .caps
            .iter()
            .map(|row| (1..self.q.len()).map(|s| row.t_at(s, &self.q[s], &r[s])).collect())
            .collect();
        self.cap = self
            .model
            .caps
            .iter()
            .zip(&self.t)
            .map(|(row, t)| {
                1.0 - row.weight.iter().zip(t).filter(|(u, _)| **u > 0.0).map(|(u, t)| u / t).sum::<f64>()
            })
            .collect();
    }

    /// `τ·Σ c‖q−w‖² − Σ log s` over all slots.
    fn value(&self, tau: f64) -> f64 {
        let model = self.model;
        let objective: f64 = model
            .bounds
            .iter()
            .zip(&self.q[1..])
            .map(|(b, q)| b.c * (q - model.sr_pos).norm_squared())
            .sum();
        tau * objective
            - self.speed.iter().map(|s| s.ln()).sum::<f64>()
            - self.cap.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// Gradient of [`Barrier::value`] with respect to the interior waypoints.
    fn gradient(&self, tau: f64) -> Vec<Vector2<f64>> {
        let model = self.model;
        let n = model.num_slots();
        let free = n - 1;
        let v2 = model.max_step * model.max_step;
        let mut grad = vec![Vector2::zeros(); free];
        for i in 0..free {
            let c = model.bounds[i].c;
            grad[i] += (self.q[i + 1] - model.sr_pos) * (2.0 * tau * c);
        }
        for slot in 1..=n {
            let g = (self.q[slot] - self.q[slot - 1]) * (2.0 / (v2 * self.speed[slot - 1]));
            if slot <= free {
                grad[slot - 1] += g;
            }
            if slot >= 2 {
                grad[slot - 2] -= g;
            }
        }
        for ((row, t), &s) in model.caps.iter().zip(&self.t).zip(&self.cap) {
            for i in 0..free {
                let u = row.weight[i];
                if u != 0.0 {
                    grad[i] -= row.tangent[i] * (2.0 * u / (t[i] * t[i] * s));
                }
            }
        }
        grad
    }

    /// Newton direction for `τ·Σ c‖q−w‖² − Σ log s` over the interior
    /// waypoints, and the squared Newton decrement.
    fn newton_direction(&self, tau: f64) -> Option<(Vec<Vector2<f64>>, f64)> {
        let model = self.model;
        let n = model.num_slots();
        let free = n - 1;
        let v2 = model.max_step * model.max_step;
        let grad = self.gradient(tau);
        let mut diag = vec![Matrix2::zeros(); free];
        let mut off = vec![Matrix2::zeros(); free.saturating_sub(1)];

        for i in 0..free {
            let c = model.bounds[i].c;
            diag[i] += Matrix2::identity() * (2.0 * tau * c);
        }
        for slot in 1..=n {
            let s = self.speed[slot - 1];
            let delta = self.q[slot] - self.q[slot - 1];
            let g = delta * (2.0 / (v2 * s));
            let h = Matrix2::identity() * (2.0 / (v2 * s)) + g * g.transpose();
            if slot <= free {
                diag[slot - 1] += h;
            }
            if slot >= 2 {
                diag[slot - 2] += h;
            }
            if slot >= 2 && slot <= free {
                off[slot - 2] -= h;
            }
        }
        let mut low_rank: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(model.caps.len());
        for ((row, t), &s) in model.caps.iter().zip(&self.t).zip(&self.cap) {
            let mut z = vec![Vector2::zeros(); free];
            for i in 0..free {
                let u = row.weight[i];
                if u == 0.0 {
                    continue;
                }
                let ti = t[i];
                let g = row.tangent[i];
                // ∂s/∂q = 2u g / t²
                z[i] = g * (2.0 * u / (ti * ti * s));
                diag[i] += g * g.transpose() * (8.0 * u / (ti * ti * ti * s));
            }
            low_rank.push(z);
        }

        let factor = BlockTridiagonal::factor(&diag, &off)?;
        let k = low_rank.len();
        let y: Vec<Vec<Vector2<f64>>> = low_rank.iter().map(|z| factor.solve(z)).collect();
        let mut cap_m = DMatrix::<f64>::identity(k, k);
        for a in 0..k {
            for b in 0..k {
                cap_m[(a, b)] += dot(&low_rank[a], &y[b]);
            }
        }
        let cap_lu = cap_m.lu();
        // Woodbury solve of (B + Σ z zᵀ) x = r with B block tridiagonal
        let solve = |r: &[Vector2<f64>]| -> Option<Vec<Vector2<f64>>> {
            let mut x = factor.solve(r);
            if k > 0 {
                let proj = nalgebra::DVector::from_fn(k, |a, _| dot(&low_rank[a], &x));
                let coef = cap_lu.solve(&proj)?;
                for a in 0..k {
                    for i in 0..free {
                        x[i] -= y[a][i] * coef[a];
                    }
                }
            }
            Some(x)
        };
        let apply = |x: &[Vector2<f64>]| -> Vec<Vector2<f64>> {
            let mut out: Vec<Vector2<f64>> = (0..free).map(|i| diag[i] * x[i]).collect();
            for i in 0..free.saturating_sub(1) {
                out[i] += off[i] * x[i + 1];
                out[i + 1] += off[i].transpose() * x[i];
            }
            for z in &low_rank {
                let w = dot(z, x);
                for i in 0..free {
                    out[i] += z[i] * w;
                }
            }
            out
        };
        let rhs: Vec<Vector2<f64>> = grad.iter().map(|g| -g).collect();
        let mut dir = solve(&rhs)?;
        // the rank-k correction cancels heavily when a cap is nearly active
        let rhs_norm = dot(&rhs, &rhs).sqrt();
        for _ in 0..REFINE_STEPS {
            let hx = apply(&dir);
            let resid: Vec<Vector2<f64>> = rhs.iter().zip(&hx).map(|(r, h)| r - h).collect();
            if dot(&resid, &resid).sqrt() <= REFINE_TOL * rhs_norm {
                break;
            }
            let fix = solve(&resid)?;
            for (d, f) in dir.iter_mut().zip(&fix) {
                *d += f;
            }
        }
        let lambda_sq = -dot(&grad, &dir);
        if !lambda_sq.is_finite() || lambda_sq < 0.0 {
            return None;
        }
        Some((dir, lambda_sq))
    }

    /// Backtracking with Armijo acceptance; `slope` is `∇φᵀd` (negative).
    fn line_search(&mut self, tau: f64, dir: &[Vector2<f64>], slope: f64) -> bool {
        let mut step = 1.0;
        while step > 1e-14 {
            if let Some(change) = self.change(tau, dir, step) {
                if change <= ARMIJO * step * slope {
                    let before = self.q.clone();
                    for (i, d) in dir.iter().enumerate() {
                        self.q[i + 1] += d * step;
                    }
                    if self.q == before {
                        return false;
                    }
                    self.refresh();
                    return true;
                }
            }
            step *= 0.5;
        }
        false
    }

    /// `φ(q + αd) − φ(q)` evaluated in difference form, or `None` outside
    /// the barrier domain.
    fn change(&self, tau: f64, dir: &[Vector2<f64>], alpha: f64) -> Option<f64> {
        let model = self.model;
        let n = model.num_slots();
        let v2 = model.max_step * model.max_step;
        let d_at = |slot: usize| -> Vector2<f64> {
            if slot == 0 || slot == n {
                Vector2::zeros()
            } else {
                dir[slot - 1]
            }
        };

        let mut total = 0.0;
        for slot in 1..n {
            let d = d_at(slot);
            let c = model.bounds[slot - 1].c;
            if c != 0.0 {
                let x = self.q[slot] - model.sr_pos;
                total += tau * c * (2.0 * alpha * d.dot(&x) + alpha * alpha * d.norm_squared());
            }
        }
        for slot in 1..=n {
            let delta = self.q[slot] - self.q[slot - 1];
            let dd = d_at(slot) - d_at(slot - 1);
            let ds = -(2.0 * alpha * delta.dot(&dd) + alpha * alpha * dd.norm_squared()) / v2;
            let s = self.speed[slot - 1];
            if !(s + ds > 0.0) {
                return None;
            }
            total -= (ds / s).ln_1p();
        }
        for ((row, t), &s) in model.caps.iter().zip(&self.t).zip(&self.cap) {
            let mut ds = 0.0;
            for slot in 1..n {
                let u = row.weight[slot - 1];
                if u == 0.0 {
                    continue;
                }
                let dt = 2.0 * alpha * row.tangent[slot - 1].dot(&d_at(slot));
                let t0 = t[slot - 1];
                let t1 = t0 + dt;
                if !(t1 > model.t_floor) {
                    return None;
                }
                ds += u * dt / (t0 * t1);
            }
            if !(s + ds > 0.0) {
                return None;
            }
            total -= (ds / s).ln_1p();
        }
        total.is_finite().then_some(total)
    }
}

fn dot(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Block LU factorization of a symmetric block-tridiagonal matrix with 2×2
/// blocks: `diag[i]` on the diagonal and `off[i]` coupling blocks `i` and `i+1`.
struct BlockTridiagonal {
    /// Inverses of the Schur-complement pivots.
    pivot_inv: Vec<Matrix2<f64>>,
    /// `off[i−1]ᵀ · pivot_inv[i−1]`
    mult: Vec<Matrix2<f64>>,
    off: Vec<Matrix2<f64>>,
}

impl BlockTridiagonal {
    fn factor(diag: &[Matrix2<f64>], off: &[Matrix2<f64>]) -> Option<Self> {
        let m = diag.len();
        let mut pivot_inv = Vec::with_capacity(m);
        let mut mult = Vec::with_capacity(m.saturating_sub(1));
        let mut pivot = diag[0];
        pivot_inv.push(pivot.try_inverse()?);
        for i in 1..m {
            let l = off[i - 1].transpose() * pivot_inv[i - 1];
            pivot = diag[i] - l * off[i - 1];
            pivot_inv.push(pivot.try_inverse()?);
            mult.push(l);
        }
        Some(BlockTridiagonal { pivot_inv, mult, off: off.to_vec() })
    }

    fn solve(&self, rhs: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
        let m = rhs.len();
        let mut y = rhs.to_vec();
        for i in 1..m {
            let prev = y[i - 1];
            y[i] -= self.mult[i - 1] * prev;
        }
        let mut x = vec![Vector2::zeros(); m];
        x[m - 1] = self.pivot_inv[m - 1] * y[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = self.pivot_inv[i] * (y[i] - self.off[i] * x[i + 1]);
        }
        x
    }
}
