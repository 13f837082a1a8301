//! Free-space line-of-sight link physics.

use super::{ModelError, Point, PowerAllocation, Scenario, Trajectory};

/// `β0 / (H² + ‖q − w‖²)`
pub fn channel_gain_sr(q: &Point, scenario: &Scenario) -> f64 {
    scenario.ref_gain / (scenario.altitude_sq() + (q - scenario.sr_pos).norm_squared())
}

/// `β0 / (H² + ‖q − w_k‖²)`. Panics if `k` is not a receiver index.
pub fn channel_gain_pr(q: &Point, k: usize, scenario: &Scenario) -> f64 {
    let wk = &scenario.pr_positions[k];
    scenario.ref_gain / (scenario.altitude_sq() + (q - wk).norm_squared())
}

/// Achievable rate in bps/Hz, `log2(1 + η0 p / (H² + ‖q − w‖²))`.
pub fn rate(p: f64, q: &Point, scenario: &Scenario) -> Result<f64, ModelError> {
    if p < 0.0 || p.is_nan() {
        return Err(ModelError::NegativePower(p));
    }
    Ok(rate_unchecked(p, q, scenario))
}

fn rate_unchecked(p: f64, q: &Point, scenario: &Scenario) -> f64 {
    let d2 = scenario.altitude_sq() + (q - scenario.sr_pos).norm_squared();
    (scenario.eta0() * p / d2).ln_1p() / std::f64::consts::LN_2
}

/// Received interference power at receiver `k` in watts.
pub fn interference(p: f64, q: &Point, k: usize, scenario: &Scenario) -> Result<f64, ModelError> {
    if p < 0.0 || p.is_nan() {
        return Err(ModelError::NegativePower(p));
    }
    Ok(p * channel_gain_pr(q, k, scenario))
}

fn check_lengths(
    traj: &Trajectory,
    power: &PowerAllocation,
    scenario: &Scenario,
) -> Result<(), ModelError> {
    let n = scenario.num_slots;
    if traj.points.len() != n + 1 || power.powers.len() != n {
        return Err(ModelError::LengthMismatch {
            slots: n,
            waypoints: traj.points.len(),
            powers: power.powers.len(),
        });
    }
    Ok(())
}

/// Per-slot rates; slot `n` (1-based) is served from waypoint `q[n]`.
pub fn slot_rates(
    traj: &Trajectory,
    power: &PowerAllocation,
    scenario: &Scenario,
) -> Result<Vec<f64>, ModelError> {
    check_lengths(traj, power, scenario)?;
    power
        .powers
        .iter()
        .zip(&traj.points[1..])
        .map(|(&p, q)| rate(p, q, scenario))
        .collect()
}

/// Mean rate over the `N` slots.
pub fn average_rate(
    traj: &Trajectory,
    power: &PowerAllocation,
    scenario: &Scenario,
) -> Result<f64, ModelError> {
    let rates = slot_rates(traj, power, scenario)?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Time-averaged interference at every receiver.
pub fn average_interference(
    traj: &Trajectory,
    power: &PowerAllocation,
    scenario: &Scenario,
) -> Result<Vec<f64>, ModelError> {
    check_lengths(traj, power, scenario)?;
    let n = scenario.num_slots as f64;
    (0..scenario.num_prs())
        .map(|k| {
            let mut acc = 0.0;
            for (&p, q) in power.powers.iter().zip(&traj.points[1..]) {
                acc += interference(p, q, k, scenario)?;
            }
            Ok(acc / n)
        })
        .collect()
}
