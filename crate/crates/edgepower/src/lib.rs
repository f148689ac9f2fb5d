//! Stochastic power-state modeling for edge devices.
//!
//! The crate models a device as a five-state power ladder (off, sleep, idle,
//! active, overloaded) and provides four layers on top of it:
//!
//! * **Chain analysis** — validated transition matrices, an exact
//!   steady-state solver, and expected power draw
//!   ([`TransitionMatrix`], [`steady_state`], [`expected_power`]).
//! * **Monte Carlo** — seeded trajectory simulation with energy ledgers,
//!   total-variation distance against the analytical answer, and
//!   convergence/confidence-interval studies ([`simulate`],
//!   [`convergence_study`]).
//! * **Power management** — reactive, forecast-driven and tabular-Q
//!   policies stepping the ladder against a demand trace
//!   ([`run_policy`], [`qlearn::train`]).
//! * **Fleets** — several heterogeneous nodes sharing one demand stream
//!   under a scheduling strategy, optionally with load-coupled dynamics
//!   ([`simulate_fleet`]).
//!
//! Everything is deterministic given a seed: all randomness flows through
//! [`rng::SimRng`] (ChaCha8 with fixed, documented samplers), and every run
//! stamps the generator identity into its report.

pub mod error;
pub mod fleet;
pub mod matrix;
pub mod montecarlo;
pub mod policy;
pub mod profile;
pub mod qlearn;
pub mod rng;
pub mod runner;
pub mod state;
pub mod stationary;
pub mod workload;

pub use error::{Error, Result};
pub use fleet::{
    apply_coupling, fleet_expected_energy, schedule, simulate_fleet, CouplingKind, CouplingRule,
    FleetReport, NodeSpec, Strategy,
};
pub use matrix::{TransitionMatrix, ValidationReport, Violation};
pub use montecarlo::{
    confidence_interval, convergence_study, simulate, tvd, Checkpoint, CiMethod,
    ConvergenceReport, Event, EventKind, InitialState, SimulationConfig, SimulationRun,
    TICK_SECONDS,
};
pub use policy::{
    is_legal_action, legal_actions, predictive_decide, reactive_decide, step_cost, CostParams,
    PolicyDecision, PredictiveParams, ReactiveParams, Reason, DEFAULT_CAPACITY,
};
pub use profile::{DeviceProfile, EdgeCost};
pub use qlearn::{demand_level, train, QTable, TrainingConfig};
pub use rng::{SimRng, GENERATOR};
pub use runner::{late_service_fraction, overload_fraction, run_policy, ForecasterSpec, PolicySpec};
pub use state::PowerState;
pub use stationary::{expected_power, steady_state, StationaryDistribution, RESIDUAL_TOLERANCE};
pub use workload::{
    generate_bursty, generate_poisson, load_trace, save_trace, Forecaster, TraceSource,
    WorkloadTrace,
};
