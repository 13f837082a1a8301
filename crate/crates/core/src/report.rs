//! On-disk artifacts: the per-slot trace, the JSON summary and the
//! convergence log. Numbers are written with Rust's shortest round-trip
//! formatting so identical solutions give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::model::{
    channel_gain_pr, Constraint, IterationCounts, Scenario, Solution, SolverFlag,
};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

/// A constraint counts as binding once it is used up to this relative margin.
pub const BINDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Infeasible,
    Error,
}

/// Constraint residuals, positive when violated. `None` for a disabled cap.
#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub average_power_w: f64,
    pub interference_w: Vec<Option<f64>>,
    pub max_speed_excess_m: f64,
    pub endpoint_offset_m: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Binding {
    pub average_power: bool,
    pub interference: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scheme: String,
    pub scenario_hash: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub num_slots: usize,
    pub avg_rate_bpshz: Option<f64>,
    pub avg_power_w: Option<f64>,
    pub avg_interference_w: Vec<f64>,
    pub residuals: Option<Residuals>,
    pub binding: Option<Binding>,
    pub iterations: IterationCounts,
    pub flags: Vec<SolverFlag>,
    pub feasible: bool,
}

impl Summary {
    pub fn from_solution(scheme: &str, sol: &Solution, scenario: &Scenario, tol: f64) -> Self {
        let report = sol.feasibility(scenario, tol);
        let residual = |c: Constraint| report.find(c).map_or(f64::NAN, |c| c.residual);
        let max_speed_excess_m = (1..=scenario.num_slots)
            .map(|slot| residual(Constraint::Speed { slot }))
            .fold(f64::NEG_INFINITY, f64::max);
        let endpoint_offset_m =
            residual(Constraint::InitialPoint).max(residual(Constraint::FinalPoint));
        let interference_w = (0..scenario.num_prs())
            .map(|receiver| Some(residual(Constraint::Interference { receiver })).filter(|r| r.is_finite()))
            .collect();
        let avg_power = sol.power.average();
        let p_lim = scenario.avg_power_limit;
        let binding = Binding {
            average_power: avg_power >= p_lim * (1.0 - BINDING_TOL),
            interference: sol
                .avg_interference
                .iter()
                .zip(&scenario.it_limits)
                .map(|(&i, &g)| g.is_finite() && i >= g * (1.0 - BINDING_TOL))
                .collect(),
        };
        let feasible = report.is_feasible();
        Summary {
            scheme: scheme.to_string(),
            scenario_hash: scenario.fingerprint(),
            status: if feasible { Status::Ok } else { Status::Infeasible },
            error: None,
            num_slots: scenario.num_slots,
            avg_rate_bpshz: Some(sol.avg_rate),
            avg_power_w: Some(avg_power),
            avg_interference_w: sol.avg_interference.clone(),
            residuals: Some(Residuals {
                average_power_w: avg_power - p_lim,
                interference_w,
                max_speed_excess_m,
                endpoint_offset_m,
            }),
            binding: Some(binding),
            iterations: sol.iterations,
            flags: sol.flags.clone(),
            feasible,
        }
    }

    pub fn failure(scheme: &str, scenario: &Scenario, message: String) -> Self {
        Summary {
            scheme: scheme.to_string(),
            scenario_hash: scenario.fingerprint(),
            status: Status::Error,
            error: Some(message),
            num_slots: scenario.num_slots,
            avg_rate_bpshz: None,
            avg_power_w: None,
            avg_interference_w: Vec::new(),
            residuals: None,
            binding: None,
            iterations: IterationCounts::default(),
            flags: Vec::new(),
            feasible: false,
        }
    }
}

/// Header of the trace file for `k` receivers.
pub fn trace_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["n", "t_s", "x_m", "y_m", "p_W", "rate_bpshz"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=k).map(|i| format!("I_pr{i}_W")));
    h
}

/// One row per waypoint. Row 0 has empty power, rate and interference
/// columns; row `n` carries the quantities of slot `n`.
pub fn write_trace(path: &Path, sol: &Solution, scenario: &Scenario) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let k = scenario.num_prs();
    w.write_record(trace_header(k))?;
    let dt = scenario.slot_duration();
    for (n, q) in sol.trajectory.points.iter().enumerate() {
        let mut row = vec![n.to_string(), (n as f64 * dt).to_string(), q.x.to_string(), q.y.to_string()];
        if n == 0 {
            row.extend(std::iter::repeat_n(String::new(), 2 + k));
        } else {
            let p = sol.power.powers[n - 1];
            row.push(p.to_string());
            row.push(sol.slot_rates[n - 1].to_string());
            row.extend((0..k).map(|i| (p * channel_gain_pr(q, i, scenario)).to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence(path: &Path, sol: &Solution) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["stage", "outer", "inner", "objective", "max_residual"])?;
    for r in &sol.convergence {
        w.write_record([
            r.stage.as_str().to_string(),
            r.outer.to_string(),
            r.inner.to_string(),
            r.objective.to_string(),
            (r.max_residual + 0.0).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes all three artifacts for a solved scheme into `dir`.
pub fn write_solution(
    dir: &Path,
    scheme: &str,
    sol: &Solution,
    scenario: &Scenario,
    tol: f64,
) -> Result<Summary> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_trace(&dir.join(TRACE_FILE), sol, scenario)?;
    write_convergence(&dir.join(CONVERGENCE_FILE), sol)?;
    let summary = Summary::from_solution(scheme, sol, scenario, tol);
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Writes only the error summary. Stale traces from an earlier run are
/// removed so the directory never mixes outcomes.
pub fn write_failure(dir: &Path, scheme: &str, scenario: &Scenario, message: String) -> Result<Summary> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for stale in [TRACE_FILE, CONVERGENCE_FILE] {
        let p = dir.join(stale);
        if p.exists() {
            std::fs::remove_file(&p)?;
        }
    }
    let summary = Summary::failure(scheme, scenario, message);
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PowerAllocation, Trajectory};

    #[test]
    fn trace_shape() {
        let s = Scenario::reference();
        let sol = Solution::evaluate(Trajectory::straight_line(&s), PowerAllocation::constant(200, 0.01), &s)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRACE_FILE);
        write_trace(&path, &sol, &s).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, ["n", "t_s", "x_m", "y_m", "p_W", "rate_bpshz", "I_pr1_W", "I_pr2_W"]);
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 201);
        assert!(rows[0].iter().skip(4).all(|c| c.is_empty()));
        assert!(rows[1..].iter().all(|row| row.iter().all(|c| !c.is_empty())));
        assert_eq!(rows[200][2].parse::<f64>().unwrap(), 1000.0);
    }

    #[test]
    fn summary_binding_and_order() {
        let s = Scenario::reference();
        let sol = Solution::evaluate(Trajectory::straight_line(&s), PowerAllocation::constant(200, 1.0), &s)
            .unwrap();
        let sum = Summary::from_solution("straight-line", &sol, &s, 1e-6);
        assert!(!sum.feasible);
        assert_eq!(sum.status, Status::Infeasible);
        let b = sum.binding.as_ref().unwrap();
        assert!(b.average_power);
        let text = serde_json::to_string(&sum).unwrap();
        let keys = ["\"scheme\"", "\"scenario_hash\"", "\"status\"", "\"avg_rate_bpshz\"", "\"residuals\"", "\"binding\"", "\"iterations\"", "\"flags\"", "\"feasible\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
    }

    #[test]
    fn failure_summary_has_message() {
        let s = Scenario::reference();
        let sum = Summary::failure("joint", &s, "boom".into());
        let text = serde_json::to_string(&sum).unwrap();
        assert!(text.contains("\"status\":\"error\"") && text.contains("boom"));
    }
}
