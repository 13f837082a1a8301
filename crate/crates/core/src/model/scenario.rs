use nalgebra::Vector2;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{ModelError, Point};
use crate::units::{db_to_linear, dbm_to_watt};

/// A protected ground receiver together with its average interference cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimaryReceiver {
    pub position: [f64; 2],
    /// Watts. `f64::INFINITY` disables the constraint.
    pub it_limit: f64,
}

/// Immutable problem instance. All quantities are SI.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sr_pos: Point,
    pub pr_positions: Vec<Point>,
    /// Flight altitude in meters.
    pub altitude: f64,
    /// Linear channel power gain at the 1 m reference distance.
    pub ref_gain: f64,
    /// Receiver noise (plus aggregate primary-transmitter interference) in watts.
    pub noise_power: f64,
    pub avg_power_limit: f64,
    /// Per-receiver average interference caps in watts, one per entry of `pr_positions`.
    pub it_limits: Vec<f64>,
    /// Meters per second.
    pub max_speed: f64,
    /// Mission duration in seconds.
    pub duration: f64,
    pub num_slots: usize,
    pub q_init: Point,
    pub q_final: Point,
}

impl Scenario {
    /// The two-receiver setup used throughout the numerical study: SR at the
    /// origin, receivers at (-500, 500) and (500, -500), a 200 s diagonal
    /// mission sampled every second, 30 dBm average power and -60 dBm caps.
    pub fn reference() -> Self {
        Scenario {
            sr_pos: Vector2::new(0.0, 0.0),
            pr_positions: vec![Vector2::new(-500.0, 500.0), Vector2::new(500.0, -500.0)],
            altitude: 100.0,
            ref_gain: db_to_linear(-30.0),
            noise_power: dbm_to_watt(-50.0),
            avg_power_limit: dbm_to_watt(30.0),
            it_limits: vec![dbm_to_watt(-60.0); 2],
            max_speed: 50.0,
            duration: 200.0,
            num_slots: 200,
            q_init: Vector2::new(-1000.0, 1000.0),
            q_final: Vector2::new(1000.0, -1000.0),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("altitude", self.altitude),
            ("ref_gain", self.ref_gain),
            ("noise_power", self.noise_power),
            ("avg_power_limit", self.avg_power_limit),
            ("max_speed", self.max_speed),
            ("duration", self.duration),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidScenario {
                    field,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        if self.num_slots == 0 {
            return Err(ModelError::InvalidScenario {
                field: "num_slots",
                reason: "must be at least 1".into(),
            });
        }
        if self.it_limits.len() != self.pr_positions.len() {
            return Err(ModelError::InvalidScenario {
                field: "it_limits",
                reason: format!(
                    "{} limits for {} receivers",
                    self.it_limits.len(),
                    self.pr_positions.len()
                ),
            });
        }
        if let Some(g) = self.it_limits.iter().find(|g| g.is_nan() || **g < 0.0) {
            return Err(ModelError::InvalidScenario {
                field: "it_limits",
                reason: format!("limits must be >= 0, got {g}"),
            });
        }
        let points = std::iter::once(("sr_pos", &self.sr_pos))
            .chain(self.pr_positions.iter().map(|p| ("pr_positions", p)))
            .chain([("q_init", &self.q_init), ("q_final", &self.q_final)]);
        for (field, p) in points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(ModelError::InvalidScenario {
                    field,
                    reason: "coordinates must be finite".into(),
                });
            }
        }
        let span = (self.q_final - self.q_init).norm();
        let reach = self.max_speed * self.duration;
        if span > reach * (1.0 + 1e-12) {
            return Err(ModelError::Unreachable { distance: span, reach });
        }
        Ok(())
    }

    pub fn num_prs(&self) -> usize {
        self.pr_positions.len()
    }

    /// `T / N`
    pub fn slot_duration(&self) -> f64 {
        self.duration / self.num_slots as f64
    }

    /// Maximum displacement per slot, `V = V̂ · δt`.
    pub fn max_step(&self) -> f64 {
        self.max_speed * self.slot_duration()
    }

    /// Reference SNR `β0 / σ²`.
    pub fn eta0(&self) -> f64 {
        self.ref_gain / self.noise_power
    }

    pub fn altitude_sq(&self) -> f64 {
        self.altitude * self.altitude
    }

    /// Copy of the scenario with every horizontal position shifted by `offset`.
    pub fn translated(&self, offset: Point) -> Self {
        let mut out = self.clone();
        out.sr_pos += offset;
        for p in &mut out.pr_positions {
            *p += offset;
        }
        out.q_init += offset;
        out.q_final += offset;
        out
    }

    pub fn receivers(&self) -> Vec<PrimaryReceiver> {
        self.pr_positions
            .iter()
            .zip(&self.it_limits)
            .map(|(p, &it_limit)| PrimaryReceiver { position: [p.x, p.y], it_limit })
            .collect()
    }

    /// Stable SHA-256 fingerprint over the bit patterns of every field.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |x: f64| h.update(x.to_bits().to_le_bytes());
        put(self.sr_pos.x);
        put(self.sr_pos.y);
        for (p, g) in self.pr_positions.iter().zip(&self.it_limits) {
            put(p.x);
            put(p.y);
            put(*g);
        }
        for x in [
            self.altitude,
            self.ref_gain,
            self.noise_power,
            self.avg_power_limit,
            self.max_speed,
            self.duration,
            self.q_init.x,
            self.q_init.y,
            self.q_final.x,
            self.q_final.y,
        ] {
            put(x);
        }
        h.update((self.num_slots as u64).to_le_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_constants() {
        let s = Scenario::reference();
        s.validate().unwrap();
        assert!((s.eta0() - 1e5).abs() < 1e-6);
        assert_eq!(s.slot_duration(), 1.0);
        assert_eq!(s.max_step(), 50.0);
    }

    #[test]
    fn unreachable_endpoints_rejected() {
        let mut s = Scenario::reference();
        s.duration = 50.0;
        assert!(matches!(s.validate(), Err(ModelError::Unreachable { .. })));
    }

    #[test]
    fn limit_count_mismatch_rejected() {
        let mut s = Scenario::reference();
        s.it_limits.pop();
        assert!(matches!(
            s.validate(),
            Err(ModelError::InvalidScenario { field: "it_limits", .. })
        ));
    }

    #[test]
    fn zero_receivers_allowed() {
        let mut s = Scenario::reference();
        s.pr_positions.clear();
        s.it_limits.clear();
        s.validate().unwrap();
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Scenario::reference();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.it_limits[1] = 1e-12;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
