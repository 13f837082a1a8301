use thiserror::Error;

/// Tolerances and iteration caps shared by every solver stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative objective change that ends the alternation.
    pub outer_tol: f64,
    /// Relative objective change that ends successive convex approximation.
    pub sca_tol: f64,
    pub max_outer_iters: usize,
    pub max_sca_iters: usize,
    /// Cap on dual iterations (power) and Newton steps (trajectory) per subproblem.
    pub max_inner_iters: usize,
    /// Threshold on KKT and duality-gap residuals.
    pub dual_tol: f64,
    /// Lower bound in m² on the linearized squared distance to a receiver.
    pub t_floor: f64,
    /// Initial barrier duality-gap target as a fraction of the objective scale.
    pub barrier_initial_gap: f64,
    /// Factor by which the barrier duality gap shrinks per stage.
    pub barrier_decrease: f64,
    /// Final barrier duality gap as a fraction of the objective scale.
    pub barrier_gap_tol: f64,
    /// Relative constraint slack accepted by feasibility checks.
    pub feasibility_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            outer_tol: 1e-4,
            sca_tol: 1e-5,
            max_outer_iters: 50,
            max_sca_iters: 100,
            max_inner_iters: 500,
            dual_tol: 1e-8,
            t_floor: 1.0,
            barrier_initial_gap: 1.0,
            barrier_decrease: 10.0,
            barrier_gap_tol: 1e-10,
            feasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid solver option `{name}`: {reason}")]
pub struct OptionsError {
    pub name: &'static str,
    pub reason: &'static str,
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), OptionsError> {
        let positive = [
            ("outer_tol", self.outer_tol),
            ("sca_tol", self.sca_tol),
            ("dual_tol", self.dual_tol),
            ("t_floor", self.t_floor),
            ("barrier_initial_gap", self.barrier_initial_gap),
            ("barrier_gap_tol", self.barrier_gap_tol),
            ("feasibility_tol", self.feasibility_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(OptionsError { name, reason: "must be finite and > 0" });
            }
        }
        if !(self.barrier_decrease.is_finite() && self.barrier_decrease > 1.0) {
            return Err(OptionsError { name: "barrier_decrease", reason: "must be > 1" });
        }
        let caps = [
            ("max_outer_iters", self.max_outer_iters),
            ("max_sca_iters", self.max_sca_iters),
            ("max_inner_iters", self.max_inner_iters),
        ];
        for (name, v) in caps {
            if v == 0 {
                return Err(OptionsError { name, reason: "must be >= 1" });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SolverOptions::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut o = SolverOptions::default();
        o.t_floor = 0.0;
        assert_eq!(o.validate().unwrap_err().name, "t_floor");
        let mut o = SolverOptions::default();
        o.max_sca_iters = 0;
        assert_eq!(o.validate().unwrap_err().name, "max_sca_iters");
        let mut o = SolverOptions::default();
        o.barrier_decrease = 1.0;
        assert_eq!(o.validate().unwrap_err().name, "barrier_decrease");
    }
}
