//! TOML experiment configuration: schema, defaults, and conversion into
//! the core library's types.
//!
//! Every section is optional; a command only needs the sections it reads,
//! and anything missing falls back to the documented defaults (the built-in
//! five-state chain, its power profile, Poisson(0.5) arrivals, seed 42).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use edgepower::{
    generate_bursty, generate_poisson, load_trace, CouplingRule, DeviceProfile, InitialState,
    NodeSpec, PolicySpec, PowerState, ReactiveParams, SimulationConfig, Strategy,
    TransitionMatrix, WorkloadTrace,
};

pub const DEFAULT_STEPS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CHECKPOINTS: [usize; 3] = [1_000, 10_000, 100_000];
pub const DEFAULT_REPLICAS: usize = 30;
pub const DEFAULT_TRAINING_TICKS: usize = 500_000;
/// Added to the run seed when a `qlearning` policy does not pin
/// `training_seed`, so training draws never alias the evaluation stream.
pub const TRAINING_SEED_OFFSET: u64 = 24_001;
/// Published improvement targets the comparison report prints next to the
/// measured deltas (percent energy reduction and percent overload-share
/// reduction of a managed policy vs. the reactive baseline).
pub const DEFAULT_TARGET_ENERGY_DELTA_PCT: f64 = 20.0;
pub const DEFAULT_TARGET_OVERLOAD_DELTA_PCT: f64 = 27.0;

/// Raw deserialized config file, exactly mirroring the TOML layout.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    matrix: Option<MatrixSection>,
    profile: Option<ProfileSection>,
    simulation: Option<SimulationSection>,
    workload: Option<WorkloadSection>,
    #[serde(default)]
    policies: Vec<PolicySection>,
    converge: Option<ConvergeSection>,
    compare: Option<CompareSection>,
    sweep: Option<SweepSection>,
    fleet: Option<FleetSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixSection {
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileSection {
    /// One of the built-in profiles: "default-edge" or "raspberry-pi4".
    name: Option<String>,
    /// Multiplies all power draws and switching energies.
    scale: Option<f64>,
    /// Overrides the per-state draw entirely (switching becomes free);
    /// handy for reduced examples such as a one-state chain.
    state_power: Option<Vec<f64>>,
    labels: Option<Vec<String>>,
}

impl ProfileSection {
    fn build(&self) -> Result<DeviceProfile> {
        let base = if let Some(power) = &self.state_power {
            let labels = match &self.labels {
                Some(l) => l.clone(),
                None => (0..power.len()).map(|i| format!("s{i}")).collect(),
            };
            DeviceProfile::new("custom", labels, power.clone(), &[])?
        } else {
            match self.name.as_deref().unwrap_or("default-edge") {
                "default-edge" => DeviceProfile::default_edge(),
                "raspberry-pi4" => DeviceProfile::raspberry_pi4(),
                other => bail!(
                    "unknown profile {other:?}; built-ins are \"default-edge\" and \
                     \"raspberry-pi4\", or set state_power for a custom one"
                ),
            }
        };
        match self.scale {
            Some(factor) => Ok(base.scaled(factor)?),
            None => Ok(base),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    steps: Option<usize>,
    seed: Option<u64>,
    initial_state: Option<InitialStateSpec>,
    burn_in: Option<usize>,
}

/// Either a state index, the word "random", or a state name ("active", ...).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum InitialStateSpec {
    Index(usize),
    Name(String),
}

impl InitialStateSpec {
    fn to_core(&self) -> Result<InitialState> {
        match self {
            InitialStateSpec::Index(i) => Ok(InitialState::Fixed(*i)),
            InitialStateSpec::Name(name) if name == "random" => Ok(InitialState::Random),
            InitialStateSpec::Name(name) => {
                let state: PowerState = name
                    .parse()
                    .map_err(|e: edgepower::Error| anyhow!("initial_state: {e}"))?;
                Ok(InitialState::Fixed(state.index()))
            }
        }
    }
}

/// Where the demand trace comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorkloadSection {
    /// Independent Poisson arrivals each tick.
    Poisson { lambda: f64 },
    /// One demand count per line, read from a text file (resolved relative
    /// to the config file's directory).
    File { path: String },
    /// Two-phase on/off arrivals: lulls are silent, bursts carry
    /// `1 + Poisson(burst_lambda)` per tick.
    OnOff {
        burst_start: f64,
        burst_stop: f64,
        burst_lambda: f64,
    },
}

impl WorkloadSection {
    pub fn label(&self) -> String {
        match self {
            WorkloadSection::Poisson { lambda } => format!("poisson(lambda={lambda})"),
            WorkloadSection::File { path } => format!("file({path})"),
            WorkloadSection::OnOff {
                burst_start,
                burst_stop,
                burst_lambda,
            } => format!("on-off(start={burst_start}, stop={burst_stop}, lambda={burst_lambda})"),
        }
    }

    /// Materializes `ticks` demands with the given seed. File traces ignore
    /// the seed and must already be at least `ticks` long.
    pub fn build(&self, ticks: usize, seed: u64, base_dir: &Path) -> Result<WorkloadTrace> {
        let trace = match self {
            WorkloadSection::Poisson { lambda } => generate_poisson(*lambda, ticks, seed)?,
            WorkloadSection::OnOff {
                burst_start,
                burst_stop,
                burst_lambda,
            } => generate_bursty(*burst_start, *burst_stop, *burst_lambda, ticks, seed)?,
            WorkloadSection::File { path } => {
                let resolved = base_dir.join(path);
                let trace = load_trace(&resolved)
                    .with_context(|| format!("loading trace {}", resolved.display()))?;
                if trace.len() < ticks {
                    bail!(
                        "trace {} has {} ticks, the run needs {ticks}",
                        resolved.display(),
                        trace.len()
                    );
                }
                trace
            }
        };
        Ok(trace)
    }
}

/// One policy entry in the comparison lineup.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySection {
    /// Unmanaged baseline: sample the transition matrix every tick.
    Fixed { capacity: Option<u32> },
    Reactive {
        step_down_patience: Option<u32>,
        capacity: Option<u32>,
    },
    Predictive {
        capacity: Option<u32>,
        forecaster: Option<ForecasterSection>,
    },
    Qlearning(QlearningSection),
}

impl PolicySection {
    pub fn is_reactive(&self) -> bool {
        matches!(self, PolicySection::Reactive { .. })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForecasterSection {
    /// Sees the true next-tick demand, optionally blurred by Gaussian noise.
    Oracle { noise_sd: Option<f64> },
    /// Exponential smoothing of observed demand.
    Smoothing {
        alpha: Option<f64>,
        initial_estimate: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QlearningSection {
    pub capacity: Option<u32>,
    pub training_ticks: Option<usize>,
    pub training_seed: Option<u64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_end: Option<f64>,
    pub energy_weight: Option<f64>,
    pub switch_weight: Option<f64>,
    pub delay_penalty: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvergeSection {
    checkpoints: Option<Vec<usize>>,
    replicas: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareSection {
    target_energy_delta_pct: Option<f64>,
    target_overload_delta_pct: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Row of the matrix entry to sweep.
    pub row: usize,
    /// Column of the matrix entry to sweep.
    pub col: usize,
    /// Grid of probabilities to pin the entry to.
    pub values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FleetSection {
    /// Any of "greedy" (alias "greedy-efficiency") and "random"; the fleet
    /// command runs the whole list. Default: both.
    strategies: Option<Vec<String>>,
    coupling: Option<CouplingSection>,
    #[serde(default)]
    nodes: Vec<FleetNodeSection>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum CouplingSection {
    None {},
    LoadShare { sensitivity: Option<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FleetNodeSection {
    /// Power scale factor relative to the shared profile.
    scale: Option<f64>,
    capacity: Option<u32>,
    /// "fixed" (default) or "reactive".
    policy: Option<String>,
    step_down_patience: Option<u32>,
}

/// A fully resolved experiment: validated types, defaults applied, seed
/// override folded in.
#[derive(Debug)]
pub struct Experiment {
    pub matrix: TransitionMatrix,
    pub profile: DeviceProfile,
    pub sim: SimulationConfig,
    pub workload: WorkloadSection,
    pub policies: Vec<PolicySection>,
    pub checkpoints: Vec<usize>,
    pub replicas: usize,
    pub target_energy_delta_pct: f64,
    pub target_overload_delta_pct: f64,
    pub sweep: Option<SweepSection>,
    pub strategies: Vec<Strategy>,
    pub coupling: CouplingRule,
    pub nodes: Vec<NodeSpec>,
    /// Directory of the config file; file workloads resolve against it.
    pub base_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Experiment> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let file: ConfigFile = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        file.resolve(base_dir, seed_override)
    }
}

impl ConfigFile {
    fn resolve(self, base_dir: PathBuf, seed_override: Option<u64>) -> Result<Experiment> {
        let matrix = match self.matrix {
            Some(section) => TransitionMatrix::validated(section.rows)
                .context("matrix section rejected")?,
            None => TransitionMatrix::default_edge_chain(),
        };
        let profile = match &self.profile {
            Some(section) => section.build().context("profile section rejected")?,
            None => DeviceProfile::default_edge(),
        };
        if profile.n() != matrix.n() {
            bail!(
                "profile has {} states but the matrix has {}",
                profile.n(),
                matrix.n()
            );
        }

        let sim_section = self.simulation.as_ref();
        let sim = SimulationConfig {
            steps: sim_section.and_then(|s| s.steps).unwrap_or(DEFAULT_STEPS),
            seed: seed_override
                .or(sim_section.and_then(|s| s.seed))
                .unwrap_or(DEFAULT_SEED),
            initial_state: match sim_section.and_then(|s| s.initial_state.as_ref()) {
                Some(spec) => spec.to_core()?,
                None => InitialState::Random,
            },
            burn_in: sim_section.and_then(|s| s.burn_in).unwrap_or(0),
        };

        let workload = self
            .workload
            .clone()
            .unwrap_or(WorkloadSection::Poisson { lambda: 0.5 });

        let converge = self.converge.as_ref();
        let checkpoints = converge
            .and_then(|c| c.checkpoints.clone())
            .unwrap_or_else(|| DEFAULT_CHECKPOINTS.to_vec());
        let replicas = converge.and_then(|c| c.replicas).unwrap_or(DEFAULT_REPLICAS);

        let compare = self.compare.as_ref();
        let target_energy_delta_pct = compare
            .and_then(|c| c.target_energy_delta_pct)
            .unwrap_or(DEFAULT_TARGET_ENERGY_DELTA_PCT);
        let target_overload_delta_pct = compare
            .and_then(|c| c.target_overload_delta_pct)
            .unwrap_or(DEFAULT_TARGET_OVERLOAD_DELTA_PCT);

        if let Some(sweep) = &self.sweep {
            if sweep.row >= matrix.n() || sweep.col >= matrix.n() {
                bail!(
                    "sweep entry ({}, {}) is outside the {}x{} matrix",
                    sweep.row,
                    sweep.col,
                    matrix.n(),
                    matrix.n()
                );
            }
            if sweep.values.is_empty() {
                bail!("sweep needs at least one grid value");
            }
            for &v in &sweep.values {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    bail!("sweep value {v} is not a probability in [0, 1]");
                }
            }
        }

        let (strategies, coupling, nodes) = resolve_fleet(
            self.fleet.as_ref(),
            &matrix,
            &profile,
        )?;

        Ok(Experiment {
            matrix,
            profile,
            sim,
            workload,
            policies: self.policies,
            checkpoints,
            replicas,
            target_energy_delta_pct,
            target_overload_delta_pct,
            sweep: self.sweep,
            strategies,
            coupling,
            nodes,
            base_dir,
        })
    }
}

fn parse_strategy(name: &str) -> Result<Strategy> {
    match name {
        "greedy" | "greedy-efficiency" => Ok(Strategy::GreedyEfficiency),
        "random" => Ok(Strategy::Random),
        other => bail!("unknown strategy {other:?}; use \"greedy\" or \"random\""),
    }
}

/// The three-node demonstration fleet: power scales x1.0 / x1.5 / x2.0 with
/// capacities 1 / 2 / 3, all following the shared transition matrix.
const DEMO_FLEET: [(f64, u32); 3] = [(1.0, 1), (1.5, 2), (2.0, 3)];

fn resolve_fleet(
    section: Option<&FleetSection>,
    matrix: &TransitionMatrix,
    profile: &DeviceProfile,
) -> Result<(Vec<Strategy>, CouplingRule, Vec<NodeSpec>)> {
    let strategies = match section.and_then(|f| f.strategies.as_ref()) {
        Some(names) if !names.is_empty() => names
            .iter()
            .map(|n| parse_strategy(n))
            .collect::<Result<Vec<_>>>()?,
        _ => vec![Strategy::GreedyEfficiency, Strategy::Random],
    };

    let coupling = match section.and_then(|f| f.coupling.as_ref()) {
        None | Some(CouplingSection::None {}) => CouplingRule::none(),
        Some(CouplingSection::LoadShare { sensitivity }) => {
            CouplingRule::load_share(sensitivity.unwrap_or(1.0))?
        }
    };

    let mut nodes = Vec::new();
    match section.filter(|f| !f.nodes.is_empty()) {
        Some(f) => {
            for (i, node) in f.nodes.iter().enumerate() {
                nodes.push(resolve_node(node, matrix, profile).with_context(|| {
                    format!("fleet node {i} rejected")
                })?);
            }
        }
        None => {
            for (scale, capacity) in DEMO_FLEET {
                nodes.push(NodeSpec {
                    matrix: matrix.clone(),
                    profile: profile.scaled(scale)?,
                    policy: PolicySpec::FixedMatrix { capacity },
                });
            }
        }
    }
    Ok((strategies, coupling, nodes))
}

fn resolve_node(
    node: &FleetNodeSection,
    matrix: &TransitionMatrix,
    profile: &DeviceProfile,
) -> Result<NodeSpec> {
    let capacity = node.capacity.unwrap_or(edgepower::DEFAULT_CAPACITY);
    let policy = match node.policy.as_deref().unwrap_or("fixed") {
        "fixed" => PolicySpec::FixedMatrix { capacity },
        "reactive" => PolicySpec::Reactive(ReactiveParams {
            step_down_patience: node.step_down_patience.unwrap_or(3),
            capacity,
        }),
        other => bail!("unknown node policy {other:?}; use \"fixed\" or \"reactive\""),
    };
    Ok(NodeSpec {
        matrix: matrix.clone(),
        profile: profile.scaled(node.scale.unwrap_or(1.0))?,
        policy,
    })
}
