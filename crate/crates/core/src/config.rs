//! TOML scenario files.
//!
//! Radio quantities accept plain numbers (SI) or strings with a unit suffix:
//! powers in `W`, `mW` or `dBm`, gains as a linear number or in `dB`, and
//! `inf` for a disabled interference cap. Omitted fields take the values of
//! [`Scenario::reference`]; an omitted slot count defaults to one slot per
//! second of mission time.
//!
//! ```toml
//! duration_s = 200
//! avg_power = "30 dBm"
//! q_init = [-1000, 1000]
//! q_final = [1000, -1000]
//!
//! [[receivers]]
//! position = [-500, 500]
//! it_limit = "-60 dBm"
//! ```

use std::path::Path;

use nalgebra::Vector2;
use serde::Deserialize;
use thiserror::Error;

use crate::model::Scenario;
use crate::options::SolverOptions;
use crate::units::{db_to_linear, dbm_to_watt};

/// Text of the bundled scenario used for the numerical study.
pub const PAPER_IV: &str = include_str!("../../../configs/paper_iv.toml");

/// Name under which [`PAPER_IV`] can be requested instead of a path.
pub const PAPER_IV_NAME: &str = "paper_iv";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReceiverEntry {
    position: [f64; 2],
    it_limit: Option<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverEntry {
    outer_tol: Option<f64>,
    sca_tol: Option<f64>,
    max_outer_iters: Option<usize>,
    max_sca_iters: Option<usize>,
    max_inner_iters: Option<usize>,
    dual_tol: Option<f64>,
    t_floor: Option<f64>,
    barrier_initial_gap: Option<f64>,
    barrier_decrease: Option<f64>,
    barrier_gap_tol: Option<f64>,
    feasibility_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    duration_s: Option<f64>,
    num_slots: Option<usize>,
    altitude_m: Option<f64>,
    max_speed_mps: Option<f64>,
    noise_power: Option<Quantity>,
    ref_gain: Option<Quantity>,
    avg_power: Option<Quantity>,
    /// Cap applied to receivers that do not set their own.
    it_limit: Option<Quantity>,
    sr: Option<[f64; 2]>,
    q_init: Option<[f64; 2]>,
    q_final: Option<[f64; 2]>,
    receivers: Option<Vec<ReceiverEntry>>,
    solver: Option<SolverEntry>,
}

/// A parsed configuration: the scenario and any solver overrides.
#[derive(Debug, Clone)]
pub struct Config {
    pub scenario: Scenario,
    pub options: SolverOptions,
    /// Whether the file fixed the slot count explicitly.
    pub explicit_slots: bool,
}

/// Parses a power given in `W`, `mW`, `dBm`, or as a bare number of watts.
pub fn parse_power(field: &str, text: &str) -> Result<f64, ConfigError> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    let (number, unit) = split_unit(t);
    let value: f64 = number
        .parse()
        .map_err(|_| field_err(field, format!("cannot read a number from `{text}`")))?;
    match unit.to_ascii_lowercase().as_str() {
        "" | "w" => Ok(value),
        "mw" => Ok(value * 1e-3),
        "dbm" => Ok(dbm_to_watt(value)),
        other => Err(field_err(field, format!("unknown power unit `{other}` (use W, mW or dBm)"))),
    }
}

/// Parses a linear ratio given as a bare number or in `dB`.
pub fn parse_gain(field: &str, text: &str) -> Result<f64, ConfigError> {
    let (number, unit) = split_unit(text.trim());
    let value: f64 = number
        .parse()
        .map_err(|_| field_err(field, format!("cannot read a number from `{text}`")))?;
    match unit.to_ascii_lowercase().as_str() {
        "" => Ok(value),
        "db" => Ok(db_to_linear(value)),
        other => Err(field_err(field, format!("unknown gain unit `{other}` (use dB)"))),
    }
}

fn split_unit(text: &str) -> (&str, &str) {
    let cut = text
        .char_indices()
        .find(|&(i, c)| {
            c.is_ascii_alphabetic()
                && !((c == 'e' || c == 'E') && text[i + 1..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+'))
        })
        .map_or(text.len(), |(i, _)| i);
    (text[..cut].trim(), text[cut..].trim())
}

fn power_of(field: &str, q: &Quantity) -> Result<f64, ConfigError> {
    match q {
        Quantity::Number(x) => Ok(*x),
        Quantity::Text(t) => parse_power(field, t),
    }
}

fn gain_of(field: &str, q: &Quantity) -> Result<f64, ConfigError> {
    match q {
        Quantity::Number(x) => Ok(*x),
        Quantity::Text(t) => parse_gain(field, t),
    }
}

/// Parses configuration text.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    let mut s = Scenario::reference();
    if let Some(t) = file.duration_s {
        s.duration = t;
    }
    if let Some(h) = file.altitude_m {
        s.altitude = h;
    }
    if let Some(v) = file.max_speed_mps {
        s.max_speed = v;
    }
    if let Some(q) = &file.noise_power {
        s.noise_power = power_of("noise_power", q)?;
    }
    if let Some(q) = &file.ref_gain {
        s.ref_gain = gain_of("ref_gain", q)?;
    }
    if let Some(q) = &file.avg_power {
        s.avg_power_limit = power_of("avg_power", q)?;
    }
    let default_cap = match &file.it_limit {
        Some(q) => power_of("it_limit", q)?,
        None => s.it_limits[0],
    };
    if let Some([x, y]) = file.sr {
        s.sr_pos = Vector2::new(x, y);
    }
    if let Some([x, y]) = file.q_init {
        s.q_init = Vector2::new(x, y);
    }
    if let Some([x, y]) = file.q_final {
        s.q_final = Vector2::new(x, y);
    }
    match &file.receivers {
        Some(list) => {
            s.pr_positions = list.iter().map(|r| Vector2::new(r.position[0], r.position[1])).collect();
            s.it_limits = list
                .iter()
                .enumerate()
                .map(|(k, r)| match &r.it_limit {
                    Some(q) => power_of(&format!("receivers[{k}].it_limit"), q),
                    None => Ok(default_cap),
                })
                .collect::<Result<_, _>>()?;
        }
        None => s.it_limits = vec![default_cap; s.pr_positions.len()],
    }
    s.num_slots = match file.num_slots {
        Some(n) => n,
        None => {
            if !(s.duration.is_finite() && s.duration >= 0.5) {
                return Err(field_err("duration_s", "must be at least 0.5 s when num_slots is omitted"));
            }
            s.duration.round() as usize
        }
    };
    s.validate().map_err(|e| match e {
        crate::model::ModelError::InvalidScenario { field, reason } => field_err(field, reason),
        other @ crate::model::ModelError::Unreachable { .. } => field_err("q_final", other.to_string()),
        other => field_err("scenario", other.to_string()),
    })?;

    let mut o = SolverOptions::default();
    if let Some(sv) = file.solver {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut o.outer_tol, sv.outer_tol);
        set(&mut o.sca_tol, sv.sca_tol);
        set(&mut o.dual_tol, sv.dual_tol);
        set(&mut o.t_floor, sv.t_floor);
        set(&mut o.barrier_initial_gap, sv.barrier_initial_gap);
        set(&mut o.barrier_decrease, sv.barrier_decrease);
        set(&mut o.barrier_gap_tol, sv.barrier_gap_tol);
        set(&mut o.feasibility_tol, sv.feasibility_tol);
        o.max_outer_iters = sv.max_outer_iters.unwrap_or(o.max_outer_iters);
        o.max_sca_iters = sv.max_sca_iters.unwrap_or(o.max_sca_iters);
        o.max_inner_iters = sv.max_inner_iters.unwrap_or(o.max_inner_iters);
    }
    o.validate().map_err(|e| field_err(format!("solver.{}", e.name), e.reason))?;
    Ok(Config { scenario: s, options: o, explicit_slots: file.num_slots.is_some() })
}

/// Reads a configuration file. The name [`PAPER_IV_NAME`] selects the
/// bundled scenario when no file of that name exists.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    if path.as_os_str() == PAPER_IV_NAME && !path.exists() {
        return parse_config(PAPER_IV);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// The validated scenario of a configuration file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    load_config(path).map(|c| c.scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_reference() {
        let c = parse_config(PAPER_IV).unwrap();
        assert_eq!(c.scenario, Scenario::reference());
        assert_eq!(c.options, SolverOptions::default());
        assert!(c.explicit_slots);
    }

    #[test]
    fn units() {
        assert!((parse_power("x", "-60 dBm").unwrap() - 1e-9).abs() < 1e-23);
        assert!((parse_power("x", "-60dBm").unwrap() - 1e-9).abs() < 1e-23);
        assert_eq!(parse_power("x", "1e-9 W").unwrap(), 1e-9);
        assert_eq!(parse_power("x", "1e-9").unwrap(), 1e-9);
        assert_eq!(parse_power("x", "250 mW").unwrap(), 0.25);
        assert_eq!(parse_power("x", "inf").unwrap(), f64::INFINITY);
        assert!((parse_gain("x", "-30 dB").unwrap() - 1e-3).abs() < 1e-18);
        assert!(parse_power("x", "3 dBW").is_err());
        assert!(parse_power("x", "abc").is_err());
    }

    #[test]
    fn slot_count_follows_duration() {
        let c = parse_config("duration_s = 120\nmax_speed_mps = 50").unwrap();
        assert_eq!(c.scenario.num_slots, 120);
        assert!(!c.explicit_slots);
        let c = parse_config("duration_s = 120\nnum_slots = 60").unwrap();
        assert_eq!(c.scenario.num_slots, 60);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = parse_config("duration_s = 20").unwrap_err();
        assert!(err.to_string().contains("q_final"), "{err}");
        let err = parse_config("avg_power = \"3 furlongs\"").unwrap_err();
        assert!(err.to_string().contains("avg_power"), "{err}");
        let err = parse_config("bogus = 1").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        let err = parse_config("[solver]\nsca_tol = -1").unwrap_err();
        assert!(err.to_string().contains("solver.sca_tol"), "{err}");
    }

    #[test]
    fn per_receiver_caps() {
        let text = r#"
            it_limit = "-90 dBm"
            [[receivers]]
            position = [0, 300]
            [[receivers]]
            position = [0, -300]
            it_limit = "inf"
        "#;
        let c = parse_config(text).unwrap();
        assert!((c.scenario.it_limits[0] - 1e-12).abs() < 1e-25);
        assert!(c.scenario.it_limits[1].is_infinite());
    }
}
