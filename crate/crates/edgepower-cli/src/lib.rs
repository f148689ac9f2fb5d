//! Config-driven command-line harness around the `edgepower` library:
//! steady-state reports, Monte Carlo convergence studies, policy
//! comparisons, sensitivity sweeps, and fleet studies, all emitting
//! deterministic CSV files plus a plain-text summary.

pub mod commands;
pub mod config;
pub mod csvfmt;
