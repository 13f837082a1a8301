//! Power allocation for a fixed trajectory.
//!
//! The subproblem is concave in the powers with `K + 1` linear constraints,
//! so it is solved on its Lagrange dual: for given multipliers the primal
//! maximizer is a per-slot water-filling level, and the multipliers are
//! found by projected Newton descent on the (K+1)-dimensional dual. With no
//! active interference cap the single power multiplier is found exactly by
//! sorting the water levels.
//!
//! Internally everything is normalized: powers by `P`, each interference
//! constraint by `Γ_k / P`. Multipliers are converted back to SI on output.

use std::f64::consts::LOG2_E;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{Scenario, Trajectory};
use crate::options::SolverOptions;
use crate::PowerAllocation;

/// Powers below this many watts are reported as exactly zero.
pub const POWER_DUST_W: f64 = 1e-15;

/// Relative margin kept below every interference cap so that trajectory
/// subproblems start strictly inside their feasible set.
pub const INTERFERENCE_MARGIN: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("all multipliers are zero: the water level is unbounded")]
    UnboundedLevel,
    #[error("multipliers must be non-negative")]
    NegativeMultiplier,
    #[error("trajectory has {got} waypoints, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("gain and multiplier dimensions disagree")]
    Dimension,
}

/// Lagrange multipliers of the average-power (`lambda`) and interference
/// (`mu[k]`) constraints, in SI units (bps/Hz per W).
#[derive(Debug, Clone, PartialEq)]
pub struct DualMultipliers {
    pub lambda: f64,
    pub mu: Vec<f64>,
}

impl DualMultipliers {
    pub fn zeros(k: usize) -> Self {
        DualMultipliers { lambda: 0.0, mu: vec![0.0; k] }
    }
}

/// Per-slot coefficients for a fixed trajectory: SNR slope `a[n] = η0/d²(q[n])`
/// and interference slope `b[k][n] = β0/d_k²(q[n])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotGains {
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
}

impl SlotGains {
    pub fn num_slots(&self) -> usize {
        self.a.len()
    }
}

pub fn slot_gains(traj: &Trajectory, scenario: &Scenario) -> SlotGains {
    let h2 = scenario.altitude_sq();
    let eta0 = scenario.eta0();
    let pts = &traj.points[1..];
    let a = pts.iter().map(|q| eta0 / (h2 + (q - scenario.sr_pos).norm_squared())).collect();
    let b = scenario
        .pr_positions
        .iter()
        .map(|wk| pts.iter().map(|q| scenario.ref_gain / (h2 + (q - wk).norm_squared())).collect())
        .collect();
    SlotGains { a, b }
}

/// Primal maximizer of the slot-separable Lagrangian,
/// `p[n] = max(0, log2(e)/(λ + Σ_k μ_k b[k][n]) − 1/a[n])`.
pub fn waterfill_power(
    duals: &DualMultipliers,
    gains: &SlotGains,
) -> Result<PowerAllocation, PowerError> {
    if duals.mu.len() != gains.b.len() {
        return Err(PowerError::Dimension);
    }
    if duals.lambda < 0.0 || duals.mu.iter().any(|&m| m < 0.0) {
        return Err(PowerError::NegativeMultiplier);
    }
    if duals.lambda == 0.0 && duals.mu.iter().all(|&m| m == 0.0) {
        return Err(PowerError::UnboundedLevel);
    }
    let powers = (0..gains.num_slots())
        .map(|n| {
            let price = duals.lambda
                + duals.mu.iter().zip(&gains.b).map(|(m, bk)| m * bk[n]).sum::<f64>();
            (LOG2_E / price - 1.0 / gains.a[n]).max(0.0)
        })
        .collect();
    Ok(PowerAllocation { powers })
}

/// Lagrange dual function: `max_p L(p, λ, μ)`. Upper-bounds the rate of every
/// feasible allocation.
pub fn dual_value(
    duals: &DualMultipliers,
    gains: &SlotGains,
    scenario: &Scenario,
) -> Result<f64, PowerError> {
    let p = waterfill_power(duals, gains)?;
    let n = gains.num_slots() as f64;
    let mut acc = 0.0;
    for (i, &pn) in p.powers.iter().enumerate() {
        let price = duals.lambda
            + duals.mu.iter().zip(&gains.b).map(|(m, bk)| m * bk[i]).sum::<f64>();
        acc += (gains.a[i] * pn).ln_1p() * LOG2_E - price * pn;
    }
    let mut value = acc / n + duals.lambda * scenario.avg_power_limit;
    for (m, g) in duals.mu.iter().zip(&scenario.it_limits) {
        if *m > 0.0 {
            value += m * g;
        }
    }
    Ok(value)
}

/// Average rate of `power` under the gains, `(1/N) Σ log2(1 + a[n] p[n])`.
pub fn objective(power: &PowerAllocation, gains: &SlotGains) -> f64 {
    let n = gains.num_slots() as f64;
    power.powers.iter().zip(&gains.a).map(|(p, a)| (a * p).ln_1p() * LOG2_E).sum::<f64>() / n
}

/// KKT residuals of an allocation/multiplier pair. Stationarity is measured
/// per unit of normalized power (`∂/∂(p/P)`), primal violations relative to
/// the right-hand sides, complementary slackness as the raw products.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals {
    pub stationarity: Vec<f64>,
    pub power_violation: f64,
    pub interference_violation: Vec<f64>,
    pub power_slackness: f64,
    pub interference_slackness: Vec<f64>,
    pub duality_gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .iter()
            .chain(&self.interference_violation)
            .chain(&self.interference_slackness)
            .chain([&self.power_violation, &self.power_slackness, &self.duality_gap])
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

pub fn kkt_residuals(
    power: &PowerAllocation,
    duals: &DualMultipliers,
    gains: &SlotGains,
    scenario: &Scenario,
) -> KktResiduals {
    let n = gains.num_slots();
    let p_lim = scenario.avg_power_limit;
    let stationarity = (0..n)
        .map(|i| {
            let p = power.powers[i];
            let marginal = gains.a[i] * LOG2_E / (1.0 + gains.a[i] * p);
            let price = duals.lambda
                + duals.mu.iter().zip(&gains.b).map(|(m, bk)| m * bk[i]).sum::<f64>();
            let r = (marginal - price) * p_lim;
            if p > 0.0 {
                r.abs()
            } else {
                r.max(0.0)
            }
        })
        .collect();
    let avg_p = power.average();
    let avg_i: Vec<f64> = gains
        .b
        .iter()
        .map(|bk| bk.iter().zip(&power.powers).map(|(b, p)| b * p).sum::<f64>() / n as f64)
        .collect();
    let interference_violation = avg_i
        .iter()
        .zip(&scenario.it_limits)
        .map(|(i, g)| if g.is_finite() && *g > 0.0 { (i / g - 1.0).max(0.0) } else if *i > 0.0 && *g == 0.0 { f64::INFINITY } else { 0.0 })
        .collect();
    let interference_slackness = avg_i
        .iter()
        .zip(&scenario.it_limits)
        .zip(&duals.mu)
        .map(|((i, g), m)| if *m == 0.0 { 0.0 } else { (m * (i - g)).abs() })
        .collect();
    let gap = if duals.lambda == 0.0 && duals.mu.iter().all(|&m| m == 0.0) {
        f64::INFINITY
    } else {
        dual_value(duals, gains, scenario).map(|d| d - objective(power, gains)).unwrap_or(f64::INFINITY)
    };
    KktResiduals {
        stationarity,
        power_violation: (avg_p / p_lim - 1.0).max(0.0),
        interference_violation,
        power_slackness: (duals.lambda * (avg_p - p_lim)).abs(),
        interference_slackness,
        duality_gap: gap,
    }
}

/// Output of [`solve_power`].
#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub power: PowerAllocation,
    pub duals: DualMultipliers,
    pub objective: f64,
    pub iterations: usize,
    /// The dual search stopped on `max_inner_iters`.
    pub capped: bool,
}

/// Optimal powers for a fixed trajectory. See [`solve_power_warm`].
pub fn solve_power(
    traj: &Trajectory,
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<PowerSolution, PowerError> {
    solve_power_warm(traj, scenario, opts, None)
}

/// Solves the power subproblem, starting the multiplier search from `warm`
/// when given. The returned allocation satisfies every constraint, with the
/// interference caps held [`INTERFERENCE_MARGIN`] inside their limits.
pub fn solve_power_warm(
    traj: &Trajectory,
    scenario: &Scenario,
    opts: &SolverOptions,
    warm: Option<&DualMultipliers>,
) -> Result<PowerSolution, PowerError> {
    let n = scenario.num_slots;
    if traj.points.len() != n + 1 {
        return Err(PowerError::Shape { expected: n + 1, got: traj.points.len() });
    }
    let gains = slot_gains(traj, scenario);
    let p_lim = scenario.avg_power_limit;
    let k_all = scenario.num_prs();

    // A zero cap forbids any transmission (every slope b is positive).
    if let Some(k0) = scenario.it_limits.iter().position(|&g| g == 0.0) {
        let mut duals = DualMultipliers::zeros(k_all);
        duals.mu[k0] = (0..n)
            .map(|i| gains.a[i] * LOG2_E / gains.b[k0][i])
            .fold(0.0, f64::max);
        return Ok(PowerSolution {
            power: PowerAllocation::zeros(n),
            duals,
            objective: 0.0,
            iterations: 0,
            capped: false,
        });
    }

    let problem = Normalized::new(&gains, scenario);
    let mut iterations = 0;
    let mut capped = false;

    let level = problem.waterfill_level();
    let mut nu = vec![0.0; problem.dim()];
    nu[0] = LOG2_E / level;
    let caps_hold = problem.gradient(&nu).iter().skip(1).all(|&g| g >= 0.0);
    if !caps_hold {
        if let Some(w) = warm {
            let candidate = problem.normalize_duals(w);
            if problem.value(&candidate).is_finite() {
                nu = candidate;
            }
        }
        let (found, it, hit_cap) = problem.minimize_dual(nu, opts.max_inner_iters);
        nu = found;
        iterations = it;
        capped = hit_cap;
    }

    let mut p = problem.primal(&nu);
    let ratios = problem.constraint_ratios(&p);
    let mut scale = 1.0f64;
    if ratios[0] > 1.0 {
        scale = scale.min(1.0 / ratios[0]);
    }
    for &r in &ratios[1..] {
        if r > 1.0 - INTERFERENCE_MARGIN {
            scale = scale.min((1.0 - INTERFERENCE_MARGIN) / r);
        }
    }
    let powers: Vec<f64> = p
        .iter_mut()
        .map(|x| {
            let w = *x * scale * p_lim;
            if w < POWER_DUST_W {
                0.0
            } else {
                w
            }
        })
        .collect();
    let power = PowerAllocation { powers };
    let duals = problem.denormalize_duals(&nu);
    let objective = objective(&power, &gains);
    Ok(PowerSolution { power, duals, objective, iterations, capped })
}

/// The subproblem in normalized units, restricted to finite caps.
struct Normalized<'a> {
    /// `a[n] · P`
    a: Vec<f64>,
    /// Rows for the finite caps, `b[k][n] · P / Γ_k`.
    b: Vec<Vec<f64>>,
    /// Original receiver index of each row in `b`.
    rows: Vec<usize>,
    num_prs: usize,
    scenario: &'a Scenario,
}

impl<'a> Normalized<'a> {
    fn new(gains: &SlotGains, scenario: &'a Scenario) -> Self {
        let p_lim = scenario.avg_power_limit;
        let a = gains.a.iter().map(|a| a * p_lim).collect();
        let mut b = Vec::new();
        let mut rows = Vec::new();
        for (k, (bk, g)) in gains.b.iter().zip(&scenario.it_limits).enumerate() {
            if g.is_finite() {
                b.push(bk.iter().map(|x| x * p_lim / g).collect());
                rows.push(k);
            }
        }
        Normalized { a, b, rows, num_prs: gains.b.len(), scenario }
    }

    fn dim(&self) -> usize {
        1 + self.b.len()
    }

    fn slots(&self) -> usize {
        self.a.len()
    }

    fn price(&self, nu: &[f64], n: usize) -> f64 {
        nu[0] + self.b.iter().zip(&nu[1..]).map(|(bk, m)| m * bk[n]).sum::<f64>()
    }

    fn primal(&self, nu: &[f64]) -> Vec<f64> {
        (0..self.slots())
            .map(|n| (LOG2_E / self.price(nu, n) - 1.0 / self.a[n]).max(0.0))
            .collect()
    }

    /// `[avg p, avg b_k p ...]`, each of which must stay ≤ 1.
    fn constraint_ratios(&self, p: &[f64]) -> Vec<f64> {
        let n = self.slots() as f64;
        let mut out = vec![p.iter().sum::<f64>() / n];
        for bk in &self.b {
            out.push(bk.iter().zip(p).map(|(b, x)| b * x).sum::<f64>() / n);
        }
        out
    }

    fn value(&self, nu: &[f64]) -> f64 {
        let n = self.slots();
        let mut acc = 0.0;
        for i in 0..n {
            let price = self.price(nu, i);
            if !(price > 0.0) {
                return f64::INFINITY;
            }
            let p = (LOG2_E / price - 1.0 / self.a[i]).max(0.0);
            acc += (self.a[i] * p).ln_1p() * LOG2_E - price * p;
        }
        acc / n as f64 + nu.iter().sum::<f64>()
    }

    fn gradient(&self, nu: &[f64]) -> Vec<f64> {
        self.constraint_ratios(&self.primal(nu)).into_iter().map(|r| 1.0 - r).collect()
    }

    fn hessian(&self, nu: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.slots();
        let mut h = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for i in 0..n {
            let price = self.price(nu, i);
            if LOG2_E / price - 1.0 / self.a[i] <= 0.0 {
                continue;
            }
            let w = LOG2_E / (price * price) / n as f64;
            e[0] = 1.0;
            for (k, bk) in self.b.iter().enumerate() {
                e[k + 1] = bk[i];
            }
            for r in 0..d {
                for c in 0..d {
                    h[(r, c)] += w * e[r] * e[c];
                }
            }
        }
        h
    }

    /// Exact water level `L` with `Σ max(0, L − 1/a[n]) = N`.
    fn waterfill_level(&self) -> f64 {
        let mut floors: Vec<f64> = self.a.iter().map(|a| 1.0 / a).collect();
        floors.sort_by(|x, y| x.total_cmp(y));
        let budget = self.slots() as f64;
        let mut sum = 0.0;
        let mut level = floors[0] + budget;
        for (m, f) in floors.iter().enumerate() {
            sum += f;
            let candidate = (budget + sum) / (m + 1) as f64;
            if m + 1 == floors.len() || candidate <= floors[m + 1] {
                level = candidate;
                break;
            }
        }
        level
    }

    fn normalize_duals(&self, d: &DualMultipliers) -> Vec<f64> {
        let p_lim = self.scenario.avg_power_limit;
        let mut nu = vec![d.lambda * p_lim];
        for &k in &self.rows {
            nu.push(d.mu.get(k).copied().unwrap_or(0.0) * self.scenario.it_limits[k]);
        }
        nu
    }

    fn denormalize_duals(&self, nu: &[f64]) -> DualMultipliers {
        let p_lim = self.scenario.avg_power_limit;
        let mut out = DualMultipliers::zeros(self.num_prs);
        out.lambda = nu[0] / p_lim;
        for (row, &k) in self.rows.iter().enumerate() {
            out.mu[k] = nu[row + 1] / self.scenario.it_limits[k];
        }
        out
    }

    /// Projected Newton descent on the dual over `ν ≥ 0`.
    fn minimize_dual(&self, mut nu: Vec<f64>, max_iters: usize) -> (Vec<f64>, usize, bool) {
        // constraint ratios carry roundoff of order N·ε
        const PG_TOL: f64 = 1e-12;
        const ARMIJO: f64 = 1e-4;
        let d = self.dim();
        let mut value = self.value(&nu);
        for iter in 0..max_iters {
            let grad = self.gradient(&nu);
            let pg = nu
                .iter()
                .zip(&grad)
                .map(|(x, g)| (x - (x - g).max(0.0)).abs())
                .fold(0.0, f64::max);
            if pg <= PG_TOL {
                return (nu, iter, false);
            }
            let eps = pg.min(1e-9);
            let free: Vec<usize> = (0..d).filter(|&i| !(nu[i] <= eps && grad[i] > 0.0)).collect();
            let hess = self.hessian(&nu);

            let mut dir = vec![0.0; d];
            for i in 0..d {
                if !free.contains(&i) {
                    let hii = hess[(i, i)];
                    dir[i] = -grad[i] / if hii > 0.0 { hii } else { 1.0 };
                }
            }
            if !free.is_empty() {
                let m = free.len();
                let mut hf = DMatrix::from_fn(m, m, |r, c| hess[(free[r], free[c])]);
                let scale = (0..m).map(|r| hf[(r, r)]).fold(0.0, f64::max).max(1e-300);
                for r in 0..m {
                    hf[(r, r)] += 1e-12 * scale;
                }
                let rhs = DVector::from_fn(m, |r, _| -grad[free[r]]);
                let step = hf
                    .cholesky()
                    .map(|c| c.solve(&rhs))
                    .unwrap_or_else(|| rhs.clone());
                for (r, &i) in free.iter().enumerate() {
                    dir[i] = step[r];
                }
            }

            let mut accepted = self.projected_search(&nu, &grad, &dir, value, ARMIJO);
            if accepted.is_none() {
                let steepest: Vec<f64> = grad.iter().map(|g| -g).collect();
                accepted = self.projected_search(&nu, &grad, &steepest, value, ARMIJO);
            }
            match accepted {
                // no representable decrease left
                Some((_, v)) if v >= value => return (nu, iter + 1, false),
                Some((next, v)) => {
                    nu = next;
                    value = v;
                }
                None => return (nu, iter + 1, false),
            }
        }
        (nu, max_iters, true)
    }

    fn projected_search(
        &self,
        nu: &[f64],
        grad: &[f64],
        dir: &[f64],
        value: f64,
        armijo: f64,
    ) -> Option<(Vec<f64>, f64)> {
        let mut step = 1.0;
        for _ in 0..60 {
            let trial: Vec<f64> =
                nu.iter().zip(dir).map(|(x, d)| (x + step * d).max(0.0)).collect();
            let decrease: f64 = grad.iter().zip(&trial).zip(nu).map(|((g, t), x)| g * (t - x)).sum();
            let v = self.value(&trial);
            if v.is_finite() && decrease < 0.0 && v <= value + armijo * decrease {
                return Some((trial, v));
            }
            step *= 0.5;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn hover(at: Vector2<f64>, n: usize) -> (Scenario, Trajectory) {
        let mut s = Scenario::reference();
        s.num_slots = n;
        s.duration = n as f64;
        s.q_init = at;
        s.q_final = at;
        (s, Trajectory { points: vec![at; n + 1] })
    }

    #[test]
    fn hover_gains() {
        let (s, t) = hover(Vector2::zeros(), 5);
        let g = slot_gains(&t, &s);
        assert!(g.a.iter().all(|a| (a - 10.0).abs() < 1e-9));
        for bk in &g.b {
            assert!(bk.iter().all(|b| *b == bk[0]));
        }
    }

    #[test]
    fn gains_decrease_away_from_sr() {
        let s = Scenario::reference();
        let t = Trajectory::straight_line(&s);
        let g = slot_gains(&t, &s);
        // waypoint 100 sits above the SR
        for n in 1..99 {
            assert!(g.a[n - 1] < g.a[n]);
        }
    }

    #[test]
    fn waterfill_closed_form() {
        let gains = SlotGains { a: vec![1.0], b: vec![] };
        let at = |lambda| waterfill_power(&DualMultipliers { lambda, mu: vec![] }, &gains).unwrap();
        assert!(at(LOG2_E).powers[0].abs() < 1e-15);
        assert!((at(LOG2_E / 2.0).powers[0] - 1.0).abs() < 1e-12);
        assert_eq!(
            waterfill_power(&DualMultipliers { lambda: 0.0, mu: vec![] }, &gains),
            Err(PowerError::UnboundedLevel)
        );
    }

    #[test]
    fn waterfill_monotone_in_mu() {
        let gains = SlotGains { a: vec![3.0, 0.5, 8.0], b: vec![vec![1e-8, 2e-8, 5e-9]] };
        let lo = waterfill_power(&DualMultipliers { lambda: 0.2, mu: vec![1e6] }, &gains).unwrap();
        let hi = waterfill_power(&DualMultipliers { lambda: 0.2, mu: vec![3e6] }, &gains).unwrap();
        for (l, h) in lo.powers.iter().zip(&hi.powers) {
            assert!(h <= l);
        }
    }

    #[test]
    fn single_slot_without_caps_uses_budget() {
        let (mut s, t) = hover(Vector2::new(30.0, 0.0), 1);
        s.pr_positions.clear();
        s.it_limits.clear();
        let sol = solve_power(&t, &s, &SolverOptions::default()).unwrap();
        assert!((sol.power.powers[0] - 1.0).abs() < 1e-12);
        let kkt = kkt_residuals(&sol.power, &sol.duals, &slot_gains(&t, &s), &s);
        assert!(kkt.max() <= 1e-10, "{kkt:?}");
    }

    #[test]
    fn perturbation_raises_stationarity() {
        let (mut s, t) = hover(Vector2::new(30.0, 0.0), 1);
        s.pr_positions.clear();
        s.it_limits.clear();
        let sol = solve_power(&t, &s, &SolverOptions::default()).unwrap();
        let gains = slot_gains(&t, &s);
        let base = kkt_residuals(&sol.power, &sol.duals, &gains, &s).stationarity[0];
        let bumped = PowerAllocation { powers: vec![sol.power.powers[0] * 1.01] };
        let after = kkt_residuals(&bumped, &sol.duals, &gains, &s).stationarity[0];
        assert!(after > base);
    }

    #[test]
    fn hovering_at_sr_hits_cap() {
        let (s, t) = hover(Vector2::zeros(), 10);
        let sol = solve_power(&t, &s, &SolverOptions::default()).unwrap();
        assert!(sol.power.powers.iter().all(|&p| p < 1.0));
        let gains = slot_gains(&t, &s);
        for bk in &gains.b {
            let avg: f64 = bk.iter().zip(&sol.power.powers).map(|(b, p)| b * p).sum::<f64>() / 10.0;
            assert!((avg - 1e-9).abs() <= 1e-6 * 1e-9, "{avg}");
        }
        let kkt = kkt_residuals(&sol.power, &sol.duals, &gains, &s);
        assert!(kkt.max() <= 1e-6, "{kkt:?}");
    }

    #[test]
    fn zero_cap_forces_silence() {
        let (mut s, t) = hover(Vector2::new(100.0, 50.0), 4);
        s.it_limits[1] = 0.0;
        let sol = solve_power(&t, &s, &SolverOptions::default()).unwrap();
        assert!(sol.power.powers.iter().all(|&p| p == 0.0));
        let kkt = kkt_residuals(&sol.power, &sol.duals, &slot_gains(&t, &s), &s);
        assert!(kkt.stationarity.iter().all(|&r| r <= 1e-12));
    }

    #[test]
    fn infinite_caps_reduce_to_water_filling() {
        let mut s = Scenario::reference();
        s.it_limits = vec![f64::INFINITY; 2];
        let t = Trajectory::straight_line(&s);
        let sol = solve_power(&t, &s, &SolverOptions::default()).unwrap();
        let gains = slot_gains(&t, &s);
        let mut idx: Vec<usize> = (0..s.num_slots).collect();
        idx.sort_by(|&i, &j| gains.a[i].total_cmp(&gains.a[j]));
        for w in idx.windows(2) {
            assert!(sol.power.powers[w[1]] >= sol.power.powers[w[0]] - 1e-12);
        }
        assert!((sol.power.average() - 1.0).abs() < 1e-12);
    }
}
