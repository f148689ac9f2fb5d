use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;
use crate::montecarlo::{EventKind, SimulationConfig, SimulationRun};
use crate::profile::DeviceProfile;
use crate::rng::{SimRng, GENERATOR};
use crate::runner::{ForecasterSpec, NodeSim, PolicySpec};
use crate::state::PowerState;
use crate::stationary::{expected_power, steady_state};
use crate::workload::WorkloadTrace;

/// XOR-folded into the fleet seed for the scheduler's own stream, so random
/// assignment never perturbs any node's trajectory draws.
const SCHEDULE_STREAM: u64 = 0x5343_4845_4455_4c45; // "SCHEDULE"

/// One device in a fleet: its chain, its wattage, and how it manages itself.
/// Serving capacity comes from the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub matrix: TransitionMatrix,
    pub profile: DeviceProfile,
    pub policy: PolicySpec,
}

/// How incoming demand is split across nodes each tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Every demand unit goes to an independently uniform node.
    Random,
    /// Awake nodes first, cheapest joules-per-task first, then spill the
    /// remainder round-robin in the same order.
    GreedyEfficiency,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::GreedyEfficiency => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    None,
    /// A node's share of the tick's demand tilts its transition row upward:
    /// step-up probabilities gain the factor `1 + sensitivity * share`,
    /// step-down probabilities lose it, and the row is renormalized.
    LoadShare,
}

/// How load feeds back into unmanaged (fixed-matrix) nodes' dynamics.
/// Policy-driven nodes already react to load through their rules, so
/// coupling only modifies sampled transitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRule {
    pub kind: CouplingKind,
    pub sensitivity: f64,
}

impl CouplingRule {
    pub fn none() -> Self {
        CouplingRule {
            kind: CouplingKind::None,
            sensitivity: 0.0,
        }
    }

    pub fn load_share(sensitivity: f64) -> Result<Self> {
        if !sensitivity.is_finite() || sensitivity < 0.0 {
            return Err(Error::invalid(
                "sensitivity",
                format!("{sensitivity} must be finite and >= 0"),
            ));
        }
        Ok(CouplingRule {
            kind: CouplingKind::LoadShare,
            sensitivity,
        })
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            CouplingKind::None => "none",
            CouplingKind::LoadShare => "load-share",
        }
    }
}

/// Tilts one transition row according to this node's share of the tick's
/// demand. `state` is the row's own index (the diagonal position), `share`
/// the node's fraction of total demand in `[0, 1]`. The result sums to one.
pub fn apply_coupling(
    row: &[f64],
    state: usize,
    share: f64,
    rule: &CouplingRule,
) -> Result<Vec<f64>> {
    if state >= row.len() {
        return Err(Error::UnknownState {
            index: state,
            n: row.len(),
        });
    }
    if !share.is_finite() || !(0.0..=1.0).contains(&share) {
        return Err(Error::invalid("share", format!("{share} not in [0, 1]")));
    }
    match rule.kind {
        CouplingKind::None => Ok(row.to_vec()),
        CouplingKind::LoadShare => {
            if !rule.sensitivity.is_finite() || rule.sensitivity < 0.0 {
                return Err(Error::invalid(
                    "sensitivity",
                    format!("{} must be finite and >= 0", rule.sensitivity),
                ));
            }
            let factor = 1.0 + rule.sensitivity * share;
            let mut out: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    if j > state {
                        p * factor
                    } else if j < state {
                        p / factor
                    } else {
                        p
                    }
                })
                .collect();
            let sum: f64 = out.iter().sum();
            if sum <= 0.0 {
                return Err(Error::invalid("row", "coupled row lost all mass"));
            }
            for p in out.iter_mut() {
                *p /= sum;
            }
            Ok(out)
        }
    }
}

/// Splits `demand` units across nodes for one tick. `states` are the nodes'
/// current state indices. Both strategies assign every unit: scheduling is
/// about *where* work lands, and whether it then gets served is the node's
/// problem (that shortfall is what the unserved ledger measures).
///
/// Greedy order: awake nodes before sleeping ones, then cheaper
/// joules-per-task (active-state power over capacity), then node index. Each
/// node is first filled to its nominal capacity; leftovers spill round-robin
/// in the same order. Greedy consumes no randomness.
pub fn schedule(
    demand: u32,
    states: &[usize],
    specs: &[NodeSpec],
    strategy: Strategy,
    rng: &mut SimRng,
) -> Vec<u32> {
    debug_assert_eq!(states.len(), specs.len());
    let m = specs.len();
    let mut assigned = vec![0u32; m];
    if demand == 0 || m == 0 {
        return assigned;
    }
    match strategy {
        Strategy::Random => {
            for _ in 0..demand {
                assigned[rng.uniform_usize(m)] += 1;
            }
        }
        Strategy::GreedyEfficiency => {
            let mut order: Vec<usize> = (0..m).collect();
            let sleeping = |i: usize| states[i] < PowerState::Idle.index();
            let joules_per_task = |i: usize| {
                specs[i].profile.power(PowerState::Active.index())
                    / specs[i].policy.capacity() as f64
            };
            order.sort_by(|&a, &b| {
                sleeping(a)
                    .cmp(&sleeping(b))
                    .then(
                        joules_per_task(a)
                            .partial_cmp(&joules_per_task(b))
                            .expect("powers are finite"),
                    )
                    .then(a.cmp(&b))
            });
            let mut remaining = demand;
            for &i in &order {
                if remaining == 0 {
                    break;
                }
                let take = remaining.min(specs[i].policy.capacity());
                assigned[i] += take;
                remaining -= take;
            }
            let mut cursor = 0;
            while remaining > 0 {
                assigned[order[cursor % m]] += 1;
                remaining -= 1;
                cursor += 1;
            }
        }
    }
    assigned
}

/// Joint outcome of a fleet run: one full [`SimulationRun`] per node plus
/// fleet-level aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetReport {
    pub per_node: Vec<SimulationRun>,
    /// Ticks on which each node received nonzero assigned demand.
    pub per_node_demand_ticks: Vec<u64>,
    /// Population coefficient of variation of per-node total energy: spread
    /// of the energy burden across the fleet (0 when all nodes match, or
    /// when no energy was spent at all).
    pub disparity_cv: f64,
    pub served_total: u64,
    pub unserved_total: u64,
    pub wake_events_total: u64,
    pub strategy: Strategy,
    pub seed: u64,
    pub generator: &'static str,
}

/// Steps every node through the trace, splitting each tick's demand with
/// `strategy` and (optionally) tilting fixed-matrix rows with `coupling`.
///
/// Node `m` draws from its own stream seeded `seed + m` and the scheduler
/// from a separate stream, so a fleet of one node under either strategy is
/// the identical computation to [`crate::runner::run_policy`] with the same
/// seed. Oracle forecasters are rejected: next-tick per-node demand depends
/// on the next scheduling decision, so no node can be given its true future.
pub fn simulate_fleet(
    specs: &[NodeSpec],
    trace: &WorkloadTrace,
    coupling: &CouplingRule,
    strategy: Strategy,
    cfg: &SimulationConfig,
) -> Result<FleetReport> {
    if specs.is_empty() {
        return Err(Error::invalid("specs", "fleet needs at least one node"));
    }
    for (i, spec) in specs.iter().enumerate() {
        if spec.matrix.n() != PowerState::COUNT {
            return Err(Error::Dimension(format!(
                "fleet node {i} must use the {}-state ladder, has {}",
                PowerState::COUNT,
                spec.matrix.n()
            )));
        }
        if let PolicySpec::Predictive {
            forecaster: ForecasterSpec::Oracle { .. },
            ..
        } = spec.policy
        {
            return Err(Error::invalid(
                "policy",
                format!("fleet node {i}: oracle forecasters need a fixed trace and cannot run inside a fleet"),
            ));
        }
    }
    if trace.len() < cfg.steps {
        return Err(Error::TraceTooShort {
            have: trace.len(),
            need: cfg.steps,
        });
    }
    if let CouplingKind::LoadShare = coupling.kind {
        if !coupling.sensitivity.is_finite() || coupling.sensitivity < 0.0 {
            return Err(Error::invalid(
                "sensitivity",
                format!("{} must be finite and >= 0", coupling.sensitivity),
            ));
        }
    }

    let mut nodes = specs
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let node_cfg = SimulationConfig {
                seed: cfg.seed.wrapping_add(m as u64),
                ..*cfg
            };
            NodeSim::new(&spec.matrix, &spec.profile, &spec.policy, &node_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scheduler_rng = SimRng::seed_from_u64(cfg.seed ^ SCHEDULE_STREAM);

    let mut states = vec![0usize; specs.len()];
    for tick in 0..cfg.steps {
        let demand = trace.demands[tick];
        for (s, node) in states.iter_mut().zip(&nodes) {
            *s = node.state;
        }
        let assigned = schedule(demand, &states, specs, strategy, &mut scheduler_rng);
        for (m, node) in nodes.iter_mut().enumerate() {
            let tilt = coupling.kind == CouplingKind::LoadShare
                && matches!(specs[m].policy, PolicySpec::FixedMatrix { .. })
                && demand > 0
                && assigned[m] > 0
                && coupling.sensitivity > 0.0;
            let row_override = if tilt {
                let share = assigned[m] as f64 / demand as f64;
                Some(apply_coupling(
                    specs[m].matrix.row(node.state),
                    node.state,
                    share,
                    coupling,
                )?)
            } else {
                None
            };
            node.step(tick, cfg.steps, assigned[m], None, row_override.as_deref())?;
        }
    }

    let per_node_demand_ticks: Vec<u64> = nodes.iter().map(|n| n.demand_ticks()).collect();
    let per_node: Vec<SimulationRun> = nodes
        .into_iter()
        .map(|n| n.finish(cfg.steps))
        .collect();

    let energies: Vec<f64> = per_node.iter().map(|r| r.energy_joules).collect();
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    let disparity_cv = if mean > 0.0 {
        let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
            / energies.len() as f64;
        var.sqrt() / mean
    } else {
        0.0
    };

    Ok(FleetReport {
        served_total: per_node.iter().map(|r| r.served).sum(),
        unserved_total: per_node.iter().map(|r| r.unserved).sum(),
        wake_events_total: per_node
            .iter()
            .flat_map(|r| &r.events)
            .filter(|e| e.kind == EventKind::WakeUpDelay)
            .count() as u64,
        per_node,
        per_node_demand_ticks,
        disparity_cv,
        strategy,
        seed: cfg.seed,
        generator: GENERATOR,
    })
}

/// Long-run mean power per node in watts (equivalently joules per tick),
/// from each node's exact stationary distribution. Only sensible for
/// fixed-matrix nodes, whose trajectories actually follow their chains.
pub fn fleet_expected_energy(specs: &[NodeSpec]) -> Result<Vec<f64>> {
    specs
        .iter()
        .map(|spec| {
            let pi = steady_state(&spec.matrix)?;
            expected_power(&pi, &spec.profile)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::InitialState;
    use crate::policy::ReactiveParams;
    use crate::runner::run_policy;
    use crate::workload::{generate_poisson, TraceSource};

    fn fixed_node(power_scale: f64, capacity: u32) -> NodeSpec {
        NodeSpec {
            matrix: TransitionMatrix::default_edge_chain(),
            profile: DeviceProfile::default_edge().scaled(power_scale).unwrap(),
            policy: PolicySpec::FixedMatrix { capacity },
        }
    }

    fn reactive_node() -> NodeSpec {
        NodeSpec {
            matrix: TransitionMatrix::default_edge_chain(),
            profile: DeviceProfile::default_edge(),
            policy: PolicySpec::Reactive(ReactiveParams::default()),
        }
    }

    fn cfg(steps: usize, seed: u64) -> SimulationConfig {
        SimulationConfig {
            steps,
            seed,
            initial_state: InitialState::Fixed(PowerState::Active.index()),
            burn_in: 0,
        }
    }

    #[test]
    fn coupling_frozen_example() {
        // Row idle with sensitivity 1 and share 0.5: factor 1.5 gives
        // [0, 0.1, 0.5, 0.45, 0.075], total 1.125, then renormalize.
        let row = [0.0, 0.15, 0.50, 0.30, 0.05];
        let rule = CouplingRule::load_share(1.0).unwrap();
        let out = apply_coupling(&row, 2, 0.5, &rule).unwrap();
        let expected = [
            0.0,
            0.1 / 1.125,
            0.5 / 1.125,
            0.45 / 1.125,
            0.075 / 1.125,
        ];
        for (a, e) in out.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15, "got {a}, expected {e}");
        }
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_none_and_zero_share_are_identity() {
        let row = [0.1, 0.2, 0.3, 0.3, 0.1];
        let none = apply_coupling(&row, 1, 0.7, &CouplingRule::none()).unwrap();
        assert_eq!(none, row);
        let rule = CouplingRule::load_share(2.0).unwrap();
        let out = apply_coupling(&row, 1, 0.0, &rule).unwrap();
        for (a, e) in out.iter().zip(row) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn coupling_validates_inputs() {
        let row = [0.5, 0.5];
        let rule = CouplingRule::load_share(1.0).unwrap();
        assert!(apply_coupling(&row, 2, 0.5, &rule).is_err());
        assert!(apply_coupling(&row, 0, 1.5, &rule).is_err());
        assert!(apply_coupling(&row, 0, -0.1, &rule).is_err());
        assert!(CouplingRule::load_share(-1.0).is_err());
        assert!(CouplingRule::load_share(f64::NAN).is_err());
    }

    #[test]
    fn coupling_always_returns_a_probability_row() {
        let rule = CouplingRule::load_share(3.0).unwrap();
        let m = TransitionMatrix::default_edge_chain();
        for state in 0..5 {
            for share10 in 0..=10 {
                let share = share10 as f64 / 10.0;
                let out = apply_coupling(m.row(state), state, share, &rule).unwrap();
                let sum: f64 = out.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(out.iter().all(|&p| (0.0..=1.0).contains(&p)));
                // Zero entries stay zero: no new edges appear.
                for (j, &p) in out.iter().enumerate() {
                    if m.get(state, j) == 0.0 {
                        assert_eq!(p, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_schedule_fills_cheapest_awake_nodes_first() {
        let specs = vec![
            fixed_node(2.0, 2), // 16 W active / cap 2 = 8 J per task
            fixed_node(1.0, 1), // 8 W / cap 1 = 8 J per task (ties after node 0)
            fixed_node(1.0, 2), // 8 W / cap 2 = 4 J per task, cheapest
        ];
        let mut rng = SimRng::seed_from_u64(1);
        // All awake (idle): cheapest first is node 2 (4 J), then 0 and 1 (8 J each, index order).
        let assigned = schedule(4, &[2, 2, 2], &specs, Strategy::GreedyEfficiency, &mut rng);
        assert_eq!(assigned, vec![2, 0, 2]);
        // Node 1 asleep changes nothing here (it was last in line anyway),
        // but a sleeping cheap node must lose its head start:
        let assigned = schedule(2, &[2, 2, 0], &specs, Strategy::GreedyEfficiency, &mut rng);
        assert_eq!(assigned, vec![2, 0, 0], "sleeping node 2 is passed over");
        // Overflow beyond all capacities spills round-robin in greedy order.
        let assigned = schedule(9, &[2, 2, 2], &specs, Strategy::GreedyEfficiency, &mut rng);
        // Capacity fill in order [2, 0, 1] places 2+2+1; the remaining 4
        // cycle through nodes 2, 0, 1, 2.
        assert_eq!(assigned, vec![3, 2, 4]);
    }

    #[test]
    fn greedy_never_wakes_sleepers_while_awake_capacity_remains() {
        let specs = vec![fixed_node(1.0, 2), fixed_node(1.5, 2), fixed_node(2.0, 3)];
        let mut rng = SimRng::seed_from_u64(2);
        for states in [[0, 2, 3], [1, 4, 0], [2, 1, 1], [0, 0, 3]] {
            for demand in 0..=5u32 {
                let assigned =
                    schedule(demand, &states, &specs, Strategy::GreedyEfficiency, &mut rng);
                assert_eq!(assigned.iter().sum::<u32>(), demand, "conservation");
                let awake_spare: u32 = (0..3)
                    .filter(|&i| states[i] >= 2)
                    .map(|i| specs[i].policy.capacity().saturating_sub(assigned[i]))
                    .sum();
                let sleeper_got_work = (0..3).any(|i| states[i] < 2 && assigned[i] > 0);
                assert!(
                    !(sleeper_got_work && awake_spare > 0),
                    "states {states:?} demand {demand}: {assigned:?} woke a sleeper \
                     while awake capacity remained"
                );
            }
        }
    }

    #[test]
    fn random_schedule_conserves_and_spreads() {
        let specs = vec![fixed_node(1.0, 1), fixed_node(1.0, 1), fixed_node(1.0, 1)];
        let mut rng = SimRng::seed_from_u64(3);
        let mut totals = [0u64; 3];
        for _ in 0..2_000 {
            let assigned = schedule(3, &[2, 2, 2], &specs, Strategy::Random, &mut rng);
            assert_eq!(assigned.iter().sum::<u32>(), 3);
            for (t, a) in totals.iter_mut().zip(&assigned) {
                *t += *a as u64;
            }
        }
        // 6000 units over 3 nodes: roughly 2000 each.
        for &t in &totals {
            assert!((t as f64 - 2_000.0).abs() < 150.0, "totals {totals:?}");
        }
    }

    #[test]
    fn fleet_of_one_is_bit_identical_to_run_policy() {
        let trace = generate_poisson(1.5, 3_000, 77).unwrap();
        let run_cfg = cfg(3_000, 9);
        for strategy in [Strategy::GreedyEfficiency, Strategy::Random] {
            let specs = vec![reactive_node()];
            let report = simulate_fleet(
                &specs,
                &trace,
                &CouplingRule::none(),
                strategy,
                &run_cfg,
            )
            .unwrap();
            let solo = run_policy(
                &specs[0].policy,
                &specs[0].matrix,
                &specs[0].profile,
                &trace,
                &run_cfg,
            )
            .unwrap();
            assert_eq!(report.per_node[0], solo, "strategy {strategy:?}");
        }
    }

    #[test]
    fn fixed_matrix_fleet_trajectories_ignore_the_scheduler() {
        // With fixed-matrix nodes and no coupling, states follow the chains
        // alone, so both strategies see identical trajectories and energy;
        // only the service ledgers differ.
        let specs = vec![fixed_node(1.0, 1), fixed_node(1.5, 2), fixed_node(2.0, 3)];
        let trace = generate_poisson(1.5, 5_000, 5).unwrap();
        let run_cfg = cfg(5_000, 21);
        let greedy = simulate_fleet(
            &specs,
            &trace,
            &CouplingRule::none(),
            Strategy::GreedyEfficiency,
            &run_cfg,
        )
        .unwrap();
        let random = simulate_fleet(
            &specs,
            &trace,
            &CouplingRule::none(),
            Strategy::Random,
            &run_cfg,
        )
        .unwrap();
        for m in 0..3 {
            assert_eq!(greedy.per_node[m].states, random.per_node[m].states);
            assert_eq!(
                greedy.per_node[m].energy_joules,
                random.per_node[m].energy_joules
            );
        }
        assert_eq!(greedy.disparity_cv, random.disparity_cv);
        assert_eq!(
            greedy.served_total + greedy.unserved_total,
            random.served_total + random.unserved_total
        );
    }

    #[test]
    fn load_share_coupling_pushes_fixed_nodes_upward() {
        let specs = vec![fixed_node(1.0, 2)];
        let trace = generate_poisson(2.0, 20_000, 13).unwrap();
        let run_cfg = cfg(20_000, 31);
        let uncoupled = simulate_fleet(
            &specs,
            &trace,
            &CouplingRule::none(),
            Strategy::GreedyEfficiency,
            &run_cfg,
        )
        .unwrap();
        let coupled = simulate_fleet(
            &specs,
            &trace,
            &CouplingRule::load_share(2.0).unwrap(),
            Strategy::GreedyEfficiency,
            &run_cfg,
        )
        .unwrap();
        // Tilting rows toward higher states on every loaded tick must raise
        // time spent in the top states.
        let top = |r: &FleetReport| r.per_node[0].occupancy[3] + r.per_node[0].occupancy[4];
        assert!(
            top(&coupled) > top(&uncoupled) + 0.05,
            "coupled {} vs uncoupled {}",
            top(&coupled),
            top(&uncoupled)
        );
        assert!(coupled.per_node[0].energy_joules > uncoupled.per_node[0].energy_joules);
    }

    #[test]
    fn fleet_expected_energy_matches_per_node_chains() {
        let specs = vec![fixed_node(1.0, 1), fixed_node(1.5, 2), fixed_node(2.0, 3)];
        let expected = fleet_expected_energy(&specs).unwrap();
        let base = 636.0 / 89.0;
        assert_eq!(expected.len(), 3);
        assert!((expected[0] - base).abs() < 1e-9);
        assert!((expected[1] - 1.5 * base).abs() < 1e-9);
        assert!((expected[2] - 2.0 * base).abs() < 1e-9);
    }

    #[test]
    fn fleet_validates_inputs() {
        let trace = generate_poisson(1.0, 100, 1).unwrap();
        let run_cfg = cfg(100, 1);
        assert!(simulate_fleet(
            &[],
            &trace,
            &CouplingRule::none(),
            Strategy::Random,
            &run_cfg
        )
        .is_err());
        // Trace shorter than the run.
        let short = WorkloadTrace::from_demands(vec![1; 10], TraceSource::Custom("x".into())).unwrap();
        assert!(simulate_fleet(
            &[fixed_node(1.0, 1)],
            &short,
            &CouplingRule::none(),
            Strategy::Random,
            &run_cfg
        )
        .is_err());
        // Oracle forecasters cannot run inside fleets.
        let oracle_node = NodeSpec {
            matrix: TransitionMatrix::default_edge_chain(),
            profile: DeviceProfile::default_edge(),
            policy: PolicySpec::Predictive {
                params: Default::default(),
                forecaster: ForecasterSpec::Oracle { noise_sd: 0.0 },
            },
        };
        assert!(simulate_fleet(
            &[oracle_node],
            &trace,
            &CouplingRule::none(),
            Strategy::Random,
            &run_cfg
        )
        .is_err());
    }

    #[test]
    fn identical_idle_reactive_nodes_have_zero_disparity_on_silence() {
        let specs = vec![reactive_node(), reactive_node()];
        let silent =
            WorkloadTrace::from_demands(vec![0; 500], TraceSource::Custom("silence".into()))
                .unwrap();
        let report = simulate_fleet(
            &specs,
            &silent,
            &CouplingRule::none(),
            Strategy::GreedyEfficiency,
            &cfg(500, 2),
        )
        .unwrap();
        // Both nodes decay Active -> Off identically: same energy, cv = 0.
        assert_eq!(
            report.per_node[0].energy_joules,
            report.per_node[1].energy_joules
        );
        assert_eq!(report.disparity_cv, 0.0);
        assert_eq!(report.wake_events_total, 0);
        assert_eq!(report.unserved_total, 0);
    }
}
