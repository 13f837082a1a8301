//! Joint trajectory and transmit-power design for a spectrum-sharing UAV
//! link that must keep its average interference at a set of primary
//! ground receivers below given caps.

pub mod alternating;
pub mod baselines;
pub mod config;
pub mod experiment;
pub mod model;
pub mod options;
pub mod oracle;
pub mod power;
pub mod report;
pub mod trajectory;
pub mod units;

pub use model::{PowerAllocation, Scenario, Solution, Trajectory};
pub use options::SolverOptions;
pub use alternating::{optimize_joint, SolveError};
