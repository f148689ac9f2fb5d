use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;
use crate::montecarlo::{
    overload_index, Event, EventKind, InitialState, SimulationConfig, SimulationRun, TICK_SECONDS,
};
use crate::policy::{
    predictive_decide, reactive_decide, PredictiveParams, ReactiveParams,
};
use crate::profile::DeviceProfile;
use crate::qlearn::{demand_level, QTable};
use crate::rng::{SimRng, GENERATOR};
use crate::state::PowerState;
use crate::workload::{Forecaster, WorkloadTrace};

/// XOR-folded into a run's seed to derive the forecaster's own noise stream,
/// so forecast noise never perturbs the trajectory draws.
const FORECAST_STREAM: u64 = 0x464f_5245_4341_5354; // "FORECAST"

/// How a forecaster is wired up inside a policy run (the live
/// [`Forecaster`] is constructed per run from the run seed).
#[derive(Debug, Clone, PartialEq)]
pub enum ForecasterSpec {
    ExponentialSmoothing { alpha: f64, initial_estimate: f64 },
    Oracle { noise_sd: f64 },
}

impl ForecasterSpec {
    fn build(&self, run_seed: u64) -> Result<Forecaster> {
        match *self {
            ForecasterSpec::ExponentialSmoothing {
                alpha,
                initial_estimate,
            } => Forecaster::exponential_smoothing(alpha, initial_estimate),
            ForecasterSpec::Oracle { noise_sd } => {
                Forecaster::oracle(noise_sd, run_seed ^ FORECAST_STREAM)
            }
        }
    }
}

/// What drives the state trajectory of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// No management: sample each step from the transition matrix. The
    /// capacity only matters for service accounting against a workload.
    FixedMatrix { capacity: u32 },
    /// Threshold rules on observed demand.
    Reactive(ReactiveParams),
    /// Threshold rules on forecast demand.
    Predictive {
        params: PredictiveParams,
        forecaster: ForecasterSpec,
    },
    /// Greedy play from a trained value table.
    Learned { table: QTable, capacity: u32 },
}

impl PolicySpec {
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::FixedMatrix { .. } => "fixed-matrix",
            PolicySpec::Reactive(_) => "reactive",
            PolicySpec::Predictive { .. } => "predictive",
            PolicySpec::Learned { .. } => "q-learning",
        }
    }

    pub fn capacity(&self) -> u32 {
        match self {
            PolicySpec::FixedMatrix { capacity } => *capacity,
            PolicySpec::Reactive(p) => p.capacity,
            PolicySpec::Predictive { params, .. } => params.capacity,
            PolicySpec::Learned { capacity, .. } => *capacity,
        }
    }

    /// Rule-driven policies walk the canonical five-state ladder; only the
    /// unmanaged baseline works on arbitrary chains.
    fn needs_ladder(&self) -> bool {
        !matches!(self, PolicySpec::FixedMatrix { .. })
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.needs_ladder() && n != PowerState::COUNT {
            return Err(Error::Dimension(format!(
                "{} policy needs the {}-state ladder, model has {n} states",
                self.label(),
                PowerState::COUNT
            )));
        }
        if self.capacity() == 0 {
            return Err(Error::invalid("capacity", "must be at least 1"));
        }
        Ok(())
    }
}

/// One device stepping through ticks under a policy. Shared by single-run
/// and fleet simulation so that a fleet of one is the same computation, draw
/// for draw, as [`run_policy`].
pub(crate) struct NodeSim<'a> {
    matrix: &'a TransitionMatrix,
    profile: &'a DeviceProfile,
    policy: &'a PolicySpec,
    rng: SimRng,
    forecaster: Option<Forecaster>,
    pub(crate) state: usize,
    idle_ticks: u32,
    burn_in: usize,
    seed: u64,
    counts: Vec<u64>,
    states: Vec<usize>,
    state_energy: f64,
    transition_energy: f64,
    events: Vec<Event>,
    served: u64,
    unserved: u64,
    demand_ticks: u64,
}

impl<'a> NodeSim<'a> {
    pub(crate) fn new(
        matrix: &'a TransitionMatrix,
        profile: &'a DeviceProfile,
        policy: &'a PolicySpec,
        cfg: &SimulationConfig,
    ) -> Result<Self> {
        matrix.validate().map_err(Error::InvalidMatrix)?;
        let n = matrix.n();
        if profile.n() != n {
            return Err(Error::Dimension(format!(
                "matrix has {n} states, profile has {}",
                profile.n()
            )));
        }
        cfg.check(n)?;
        policy.check(n)?;

        let mut rng = SimRng::seed_from_u64(cfg.seed);
        let state = match cfg.initial_state {
            InitialState::Fixed(i) => i,
            InitialState::Random => rng.uniform_usize(n),
        };
        let forecaster = match policy {
            PolicySpec::Predictive { forecaster, .. } => Some(forecaster.build(cfg.seed)?),
            _ => None,
        };
        Ok(NodeSim {
            matrix,
            profile,
            policy,
            rng,
            forecaster,
            state,
            idle_ticks: 0,
            burn_in: cfg.burn_in,
            seed: cfg.seed,
            counts: vec![0; n],
            states: Vec::with_capacity(cfg.steps),
            state_energy: 0.0,
            transition_energy: 0.0,
            events: Vec::new(),
            served: 0,
            unserved: 0,
            demand_ticks: 0,
        })
    }

    /// Units this node can serve during the current tick.
    pub(crate) fn serving_capacity(&self) -> u32 {
        let ladder_serves = PowerState::from_index(self.state)
            .map(PowerState::serves)
            .unwrap_or(false);
        if self.matrix.n() == PowerState::COUNT && ladder_serves {
            self.policy.capacity()
        } else {
            0
        }
    }

    /// Advances one tick: account for `demand` arriving while in the current
    /// state, then (unless this is the last tick) decide and switch to the
    /// next state. `true_next` feeds oracle forecasters; `row_override`
    /// replaces the matrix row for fixed-matrix nodes under fleet coupling.
    pub(crate) fn step(
        &mut self,
        tick: usize,
        total_steps: usize,
        demand: u32,
        true_next: Option<u32>,
        row_override: Option<&[f64]>,
    ) -> Result<()> {
        let n = self.matrix.n();
        let ladder = n == PowerState::COUNT;
        let s = self.state;

        self.states.push(s);
        if tick >= self.burn_in {
            self.counts[s] += 1;
        }
        self.state_energy += self.profile.power(s) * TICK_SECONDS;

        if demand > 0 {
            self.demand_ticks += 1;
            if ladder && s < PowerState::Idle.index() {
                self.events.push(Event {
                    tick: tick as u64,
                    kind: EventKind::WakeUpDelay,
                });
            }
        }
        let served_now = demand.min(self.serving_capacity());
        self.served += served_now as u64;
        self.unserved += (demand - served_now) as u64;
        self.idle_ticks = if demand == 0 { self.idle_ticks + 1 } else { 0 };

        if tick + 1 < total_steps {
            let next = self.decide(demand, true_next, row_override)?;
            if next != s {
                self.transition_energy += self
                    .profile
                    .transition_energy(s, next)
                    .expect("states are in range");
                if Some(next) == overload_index(n) {
                    self.events.push(Event {
                        tick: (tick + 1) as u64,
                        kind: EventKind::OverloadEntry,
                    });
                }
            }
            self.state = next;
        }
        Ok(())
    }

    fn decide(
        &mut self,
        demand: u32,
        true_next: Option<u32>,
        row_override: Option<&[f64]>,
    ) -> Result<usize> {
        match self.policy {
            PolicySpec::FixedMatrix { .. } => {
                let (matrix, state) = (self.matrix, self.state);
                let row = row_override.unwrap_or_else(|| matrix.row(state));
                Ok(self.rng.sample_row(row))
            }
            PolicySpec::Reactive(params) => {
                let s = PowerState::from_index(self.state).expect("ladder state");
                Ok(reactive_decide(s, demand, self.idle_ticks, params)
                    .next_state
                    .index())
            }
            PolicySpec::Predictive { params, .. } => {
                let s = PowerState::from_index(self.state).expect("ladder state");
                let predicted = self
                    .forecaster
                    .as_mut()
                    .expect("predictive runs own a forecaster")
                    .forecast_step(demand, true_next)?;
                Ok(predictive_decide(s, predicted, params)?.next_state.index())
            }
            PolicySpec::Learned { table, capacity } => {
                let s = PowerState::from_index(self.state).expect("ladder state");
                let level = demand_level(demand, *capacity);
                Ok(table.decide(s, level, &mut self.rng).next_state.index())
            }
        }
    }

    pub(crate) fn demand_ticks(&self) -> u64 {
        self.demand_ticks
    }

    pub(crate) fn finish(self, steps: usize) -> SimulationRun {
        let denom = (steps - self.burn_in) as f64;
        SimulationRun {
            states: self.states,
            occupancy: self.counts.iter().map(|&c| c as f64 / denom).collect(),
            state_energy_joules: self.state_energy,
            transition_energy_joules: self.transition_energy,
            energy_joules: self.state_energy + self.transition_energy,
            events: self.events,
            served: self.served,
            unserved: self.unserved,
            seed: self.seed,
            generator: GENERATOR,
        }
    }
}

/// Drives one device through `cfg.steps` ticks of `trace` under `policy`.
///
/// Service model: demand must be absorbed in its arrival tick by the state
/// the device is already in — `Active`/`Overloaded` serve up to the policy
/// capacity, everything else serves nothing and the excess is dropped (there
/// is no queue). The policy then observes the tick and picks the state for
/// the next tick, so waking up always costs at least one late tick unless
/// the policy moved ahead of the demand.
///
/// With a `FixedMatrix` policy and an all-zero trace this reproduces
/// [`crate::montecarlo::simulate`] bit for bit.
pub fn run_policy(
    policy: &PolicySpec,
    matrix: &TransitionMatrix,
    profile: &DeviceProfile,
    trace: &WorkloadTrace,
    cfg: &SimulationConfig,
) -> Result<SimulationRun> {
    if trace.len() < cfg.steps {
        return Err(Error::TraceTooShort {
            have: trace.len(),
            need: cfg.steps,
        });
    }
    let mut node = NodeSim::new(matrix, profile, policy, cfg)?;
    for tick in 0..cfg.steps {
        node.step(
            tick,
            cfg.steps,
            trace.demands[tick],
            trace.get(tick + 1),
            None,
        )?;
    }
    Ok(node.finish(cfg.steps))
}

/// Fraction of demand-carrying ticks that found the device off or asleep.
pub fn late_service_fraction(run: &SimulationRun, trace: &WorkloadTrace, steps: usize) -> f64 {
    let demand_ticks = trace.demand_ticks(steps);
    if demand_ticks == 0 {
        return 0.0;
    }
    let wakes = run
        .events
        .iter()
        .filter(|e| e.kind == EventKind::WakeUpDelay)
        .count();
    wakes as f64 / demand_ticks as f64
}

/// Fraction of post-burn-in ticks spent in the overloaded state.
pub fn overload_fraction(run: &SimulationRun) -> f64 {
    run.occupancy
        .get(PowerState::Overloaded.index())
        .copied()
        .unwrap_or(0.0)
}
