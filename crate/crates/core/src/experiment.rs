//! Scheme dispatch and parameter sweeps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::alternating::{optimize_joint_from, straight_line_trajectory, SolveError};
use crate::baselines::{
    power_opt_fly_hover_fly, power_opt_straight_line, trajectory_opt_constant_power,
};
use crate::config::parse_power;
use crate::model::{Point, Scenario, Solution, Trajectory};
use crate::options::SolverOptions;
use crate::report::{write_failure, write_solution, Status, Summary};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const TIMING_FILE: &str = "sweep_timing.csv";

/// Largest lateral amplitude of a perturbed start, in meters.
const MAX_BULGE_M: f64 = 300.0;
/// Perturbed starts use at most this fraction of the spare speed.
const BULGE_SPEED_SHARE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Joint,
    ConstantPower,
    StraightLine,
    FlyHoverFly,
}

impl Scheme {
    pub const ALL: [Scheme; 4] =
        [Scheme::Joint, Scheme::ConstantPower, Scheme::StraightLine, Scheme::FlyHoverFly];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Joint => "joint",
            Scheme::ConstantPower => "constant-power",
            Scheme::StraightLine => "straight-line",
            Scheme::FlyHoverFly => "fly-hover-fly",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (joint, constant-power, straight-line, fly-hover-fly)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Duration,
    Gamma,
    Power,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Duration => "T",
            Axis::Gamma => "Gamma",
            Axis::Power => "P",
        }
    }

    /// Reads one sweep value. Durations are seconds; Γ and P accept power units.
    pub fn parse_value(self, text: &str) -> Result<f64> {
        let v = match self {
            Axis::Duration => text.trim().trim_end_matches('s').trim().parse::<f64>().ok(),
            Axis::Gamma | Axis::Power => parse_power(self.as_str(), text).ok(),
        };
        match v {
            Some(v) if !v.is_nan() => Ok(v),
            _ => bail!("cannot read a {} value from `{text}`", self.as_str()),
        }
    }

    /// `base` with this axis set to `value`. A duration change keeps the
    /// slot count when `keep_slots` is set, otherwise uses one slot per second.
    pub fn apply(self, base: &Scenario, value: f64, keep_slots: bool) -> Scenario {
        let mut s = base.clone();
        match self {
            Axis::Duration => {
                s.duration = value;
                if !keep_slots {
                    s.num_slots = value.round().max(1.0) as usize;
                }
            }
            Axis::Gamma => s.it_limits.iter_mut().for_each(|g| *g = value),
            Axis::Power => s.avg_power_limit = value,
        }
        s
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "T" | "t" | "duration" => Ok(Axis::Duration),
            "Gamma" | "gamma" | "G" => Ok(Axis::Gamma),
            "P" | "p" | "power" => Ok(Axis::Power),
            _ => Err(format!("unknown axis `{s}` (T, Gamma, P)")),
        }
    }
}

/// Restart settings for the joint scheme. Start 0 is always the straight
/// line; further starts bend it sideways by a seeded random sine bulge and
/// the best final objective wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Starts {
    pub count: usize,
    pub seed: u64,
}

impl Default for Starts {
    fn default() -> Self {
        Starts { count: 1, seed: 0 }
    }
}

pub fn run_scheme(
    scheme: Scheme,
    scenario: &Scenario,
    opts: &SolverOptions,
    starts: Starts,
) -> Result<Solution, SolveError> {
    match scheme {
        Scheme::Joint => run_joint(scenario, opts, starts),
        Scheme::ConstantPower => trajectory_opt_constant_power(scenario, opts),
        Scheme::StraightLine => power_opt_straight_line(scenario, opts),
        Scheme::FlyHoverFly => power_opt_fly_hover_fly(scenario, opts),
    }
}

fn run_joint(scenario: &Scenario, opts: &SolverOptions, starts: Starts) -> Result<Solution, SolveError> {
    let line = straight_line_trajectory(scenario)?;
    let mut best = optimize_joint_from(scenario, opts, &line)?;
    let mut rng = ChaCha8Rng::seed_from_u64(starts.seed);
    for _ in 1..starts.count {
        let init = bulged_start(scenario, &line, &mut rng);
        match optimize_joint_from(scenario, opts, &init) {
            Ok(sol) if sol.avg_rate > best.avg_rate => best = sol,
            Ok(_) => {}
            Err(e) => log::debug!("perturbed start failed: {e}"),
        }
    }
    Ok(best)
}

/// The straight line pushed sideways by `a·sin(hπn/N)`, with the amplitude
/// limited so no step exceeds the speed limit.
fn bulged_start(scenario: &Scenario, line: &Trajectory, rng: &mut ChaCha8Rng) -> Trajectory {
    let n = scenario.num_slots;
    let span = scenario.q_final - scenario.q_init;
    let normal = if span.norm() > 0.0 {
        Point::new(-span.y, span.x) / span.norm()
    } else {
        Point::new(0.0, 1.0)
    };
    let harmonic = rng.gen_range(1..=3) as f64;
    let base_step = span.norm() / n as f64;
    let spare = (scenario.max_step().powi(2) - base_step.powi(2)).max(0.0).sqrt();
    let limit = (BULGE_SPEED_SHARE * spare * n as f64 / (harmonic * std::f64::consts::PI)).min(MAX_BULGE_M);
    let amplitude = rng.gen_range(-1.0..=1.0) * limit;
    let mut points: Vec<Point> = line
        .points
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let phase = harmonic * std::f64::consts::PI * i as f64 / n as f64;
            q + normal * (amplitude * phase.sin())
        })
        .collect();
    points[n] = scenario.q_final;
    Trajectory { points }
}

/// Solves one scheme and writes its artifacts into `dir`. The summary
/// records a failure instead of returning it.
pub fn run_to_dir(
    dir: &Path,
    scheme: Scheme,
    scenario: &Scenario,
    opts: &SolverOptions,
    starts: Starts,
) -> Result<Summary> {
    match run_scheme(scheme, scenario, opts, starts) {
        Ok(sol) => write_solution(dir, scheme.as_str(), &sol, scenario, opts.feasibility_tol),
        Err(e) => write_failure(dir, scheme.as_str(), scenario, e.to_string()),
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: Scheme,
    pub summary: Summary,
    pub wall_s: f64,
}

/// Runs all four schemes at every value of `axis`, `workers` points at a
/// time, writing each point under `out/<axis>=<value>/<scheme>/`, the table
/// to [`SWEEP_FILE`] and wall times to [`TIMING_FILE`].
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    out: &Path,
    axis: Axis,
    values: &[f64],
    base: &Scenario,
    keep_slots: bool,
    opts: &SolverOptions,
    starts: Starts,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("a sweep needs at least one value");
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let jobs: Vec<(f64, Scheme)> =
        values.iter().flat_map(|&v| Scheme::ALL.map(|s| (v, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building the worker pool")?;
    let rows: Vec<Result<SweepRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(value, scheme)| {
                let dir = point_dir(out, axis, value).join(scheme.as_str());
                let scenario = axis.apply(base, value, keep_slots);
                let start = Instant::now();
                let summary = match scenario.validate() {
                    Ok(()) => run_to_dir(&dir, scheme, &scenario, opts, starts)?,
                    Err(e) => write_failure(&dir, scheme.as_str(), &scenario, e.to_string())?,
                };
                Ok(SweepRow { value, scheme, summary, wall_s: start.elapsed().as_secs_f64() })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    write_sweep_table(&out.join(SWEEP_FILE), axis, &rows)?;
    write_timing(&out.join(TIMING_FILE), axis, &rows)?;
    Ok(rows)
}

pub fn point_dir(out: &Path, axis: Axis, value: f64) -> PathBuf {
    out.join(format!("{}={}", axis.as_str(), value))
}

fn opt_str(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_sweep_table(path: &Path, axis: Axis, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "axis", "value", "scheme", "status", "avg_rate_bpshz", "outer_iters", "sca_iters",
        "newton_iters", "dual_iters", "feasible", "flags",
    ])?;
    for r in rows {
        let s = &r.summary;
        let flags = s
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).ok().and_then(|v| v["flag"].as_str().map(String::from)).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            axis.as_str().to_string(),
            r.value.to_string(),
            r.scheme.to_string(),
            status_str(s.status).to_string(),
            opt_str(s.avg_rate_bpshz),
            s.iterations.outer.to_string(),
            s.iterations.sca.to_string(),
            s.iterations.newton.to_string(),
            s.iterations.dual.to_string(),
            s.feasible.to_string(),
            flags,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timing(path: &Path, axis: Axis, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["axis", "value", "scheme", "wall_s"])?;
    for r in rows {
        w.write_record([axis.as_str().to_string(), r.value.to_string(), r.scheme.to_string(), r.wall_s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn status_str(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::Infeasible => "infeasible",
        Status::Error => "error",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("hover".parse::<Scheme>().is_err());
    }

    #[test]
    fn axis_values() {
        assert_eq!(Axis::Duration.parse_value("140").unwrap(), 140.0);
        assert!((Axis::Gamma.parse_value("-90dBm").unwrap() - 1e-12).abs() < 1e-25);
        assert_eq!(Axis::Power.parse_value("1 W").unwrap(), 1.0);
        assert!(Axis::Power.parse_value("fast").is_err());
        let s = Scenario::reference();
        assert_eq!(Axis::Duration.apply(&s, 100.0, true).num_slots, 200);
        assert_eq!(Axis::Duration.apply(&s, 100.0, false).num_slots, 100);
        assert_eq!(Axis::Gamma.apply(&s, 1e-12, true).it_limits, vec![1e-12; 2]);
    }

    #[test]
    fn bulged_start_respects_speed() {
        let s = Scenario::reference();
        let line = Trajectory::straight_line(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = bulged_start(&s, &line, &mut rng);
            assert_eq!(t.points[0], s.q_init);
            assert_eq!(t.points[200], s.q_final);
            assert!(t.step_lengths().iter().all(|&d| d <= s.max_step()));
        }
    }
}
