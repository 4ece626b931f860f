//! Brownian paths, Monte Carlo estimation and the stability and energy monitors.

mod mc;
mod monitor;
mod path;

pub use mc::{dissipation, mc_estimate, parallel_map, run_ensemble, Estimate, Functional, McError, McPlan};
pub use monitor::{energy_ledger, stability_report, BoundTemplate, EnergyLedger, EnergyRow, StabilityReport, StabilityRow};
pub use path::{BrownianPath, PathError};
