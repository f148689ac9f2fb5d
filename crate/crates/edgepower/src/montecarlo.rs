use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;
use crate::profile::DeviceProfile;
use crate::rng::{SimRng, GENERATOR};
use crate::state::PowerState;
use crate::stationary::steady_state;

/// Wall-clock length of one simulation tick. State power is charged per tick;
/// switching costs come from the profile's edge energies and are assumed to
/// complete within the tick.
pub const TICK_SECONDS: f64 = 1.0;

/// z-value for the 95% confidence intervals used throughout.
pub const Z_95: f64 = 1.96;

/// Where a trajectory starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// A fixed state index.
    Fixed(usize),
    /// Uniformly random over the state space (one extra draw from the seed).
    Random,
}

impl From<PowerState> for InitialState {
    fn from(s: PowerState) -> Self {
        InitialState::Fixed(s.index())
    }
}

/// Shape of one simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Number of ticks simulated (and recorded); must be at least 1.
    pub steps: usize,
    /// Seed for the per-run random stream.
    pub seed: u64,
    pub initial_state: InitialState,
    /// Leading ticks excluded from the occupancy estimate. Energy ledgers
    /// always cover the whole run. Must be smaller than `steps`.
    pub burn_in: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            steps: 100_000,
            seed: 42,
            initial_state: InitialState::Random,
            burn_in: 0,
        }
    }
}

impl SimulationConfig {
    pub(crate) fn check(&self, n: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if self.burn_in >= self.steps {
            return Err(Error::invalid(
                "burn_in",
                format!("{} must be smaller than steps {}", self.burn_in, self.steps),
            ));
        }
        if let InitialState::Fixed(i) = self.initial_state {
            if i >= n {
                return Err(Error::UnknownState { index: i, n });
            }
        }
        Ok(())
    }
}

/// Things worth flagging on a trajectory beyond the state sequence itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The chain entered the overloaded state (logged on entry, not while
    /// it stays there). Only meaningful for five-state ladders.
    OverloadEntry,
    /// Demand arrived while the device was off or asleep, so service waits
    /// for a wake-up. Logged at most once per tick. Only produced by
    /// workload-driven runs.
    WakeUpDelay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub tick: u64,
    pub kind: EventKind,
}

/// One simulated trajectory with its occupancy estimate, energy ledgers and
/// event log. Two runs from the same configuration compare equal field by
/// field, which is how reproducibility is asserted in the tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    /// Visited state index per tick; length equals `steps`.
    pub states: Vec<usize>,
    /// Fraction of post-burn-in ticks spent in each state; sums to one.
    pub occupancy: Vec<f64>,
    /// Joules charged for sitting in states (power * tick length).
    pub state_energy_joules: f64,
    /// Joules charged for switching states.
    pub transition_energy_joules: f64,
    /// Total of the two ledgers above.
    pub energy_joules: f64,
    pub events: Vec<Event>,
    /// Demand units served / dropped. Zero for pure chain runs, which have
    /// no workload attached.
    pub served: u64,
    pub unserved: u64,
    pub seed: u64,
    /// Identity of the random generator, for archived reports.
    pub generator: &'static str,
}

/// Runs the chain for `steps` ticks, charging state power per tick and edge
/// energy per state change. The draw sequence is fixed: one uniform if the
/// initial state is random, then exactly one uniform per transition.
pub fn simulate(
    matrix: &TransitionMatrix,
    profile: &DeviceProfile,
    cfg: &SimulationConfig,
) -> Result<SimulationRun> {
    matrix.validate().map_err(Error::InvalidMatrix)?;
    let n = matrix.n();
    if profile.n() != n {
        return Err(Error::Dimension(format!(
            "matrix has {n} states, profile has {}",
            profile.n()
        )));
    }
    cfg.check(n)?;

    let mut rng = SimRng::seed_from_u64(cfg.seed);
    let mut state = match cfg.initial_state {
        InitialState::Fixed(i) => i,
        InitialState::Random => rng.uniform_usize(n),
    };

    let overload = overload_index(n);
    let mut states = Vec::with_capacity(cfg.steps);
    let mut counts = vec![0u64; n];
    let mut state_energy = 0.0;
    let mut transition_energy = 0.0;
    let mut events = Vec::new();

    for tick in 0..cfg.steps {
        states.push(state);
        if tick >= cfg.burn_in {
            counts[state] += 1;
        }
        state_energy += profile.power(state) * TICK_SECONDS;
        if tick + 1 < cfg.steps {
            let next = rng.sample_row(matrix.row(state));
            if next != state {
                transition_energy += profile
                    .transition_energy(state, next)
                    .expect("states are in range");
                if Some(next) == overload {
                    events.push(Event {
                        tick: (tick + 1) as u64,
                        kind: EventKind::OverloadEntry,
                    });
                }
            }
            state = next;
        }
    }

    let denom = (cfg.steps - cfg.burn_in) as f64;
    Ok(SimulationRun {
        states,
        occupancy: counts.iter().map(|&c| c as f64 / denom).collect(),
        state_energy_joules: state_energy,
        transition_energy_joules: transition_energy,
        energy_joules: state_energy + transition_energy,
        events,
        served: 0,
        unserved: 0,
        seed: cfg.seed,
        generator: GENERATOR,
    })
}

/// Which index counts as "overloaded" for event logging: only the canonical
/// five-state ladder has one.
pub(crate) fn overload_index(n: usize) -> Option<usize> {
    (n == PowerState::COUNT).then(|| PowerState::Overloaded.index())
}

/// Total variation distance in its unhalved form, `sum_i |a_i - b_i|`, so the
/// range is `[0, 2]`. Symmetric, zero exactly when the vectors agree.
pub fn tvd(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "distributions have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension("empty distributions".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(
            "distribution",
            "entries must be finite and nonnegative",
        ));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// How the 95% interval half-width is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    /// `pi_hat +/- 1.96 * sqrt(sigma / N)` where `sigma` is the sample
    /// standard deviation of the estimate across independent replicas. This
    /// is the interval the rest of the reporting is calibrated against;
    /// note the unusual placement of `sigma` inside the square root.
    CrossReplica,
    /// The textbook binomial interval `pi_hat +/- 1.96 *
    /// sqrt(pi_hat * (1 - pi_hat) / N)`; ignores `sigma`. Assumes the ticks
    /// were independent, which a Markov trajectory is not, so expect this
    /// one to undercover on autocorrelated chains.
    Wald,
}

impl CiMethod {
    pub fn label(self) -> &'static str {
        match self {
            CiMethod::CrossReplica => "cross-replica",
            CiMethod::Wald => "wald",
        }
    }
}

/// 95% confidence interval for an occupancy estimate, clamped to `[0, 1]`.
pub fn confidence_interval(
    pi_hat: f64,
    sigma: f64,
    samples: usize,
    method: CiMethod,
) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&pi_hat) || !pi_hat.is_finite() {
        return Err(Error::invalid(
            "pi_hat",
            format!("{pi_hat} is outside [0, 1]"),
        ));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid("sigma", format!("{sigma} must be >= 0")));
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let n = samples as f64;
    let half = match method {
        CiMethod::CrossReplica => Z_95 * (sigma / n).sqrt(),
        CiMethod::Wald => Z_95 * (pi_hat * (1.0 - pi_hat) / n).sqrt(),
    };
    Ok(((pi_hat - half).max(0.0), (pi_hat + half).min(1.0)))
}

/// Occupancy error of one trajectory at a ladder of checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub steps: usize,
    /// TVD of the primary trajectory's occupancy vs. the analytical
    /// stationary distribution at this many steps.
    pub tvd: f64,
    /// Same quantity averaged over all replicas.
    pub mean_tvd: f64,
}

/// Output of [`convergence_study`]: empirical-vs-analytical agreement as the
/// trajectory grows, plus confidence intervals from independent replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub generator: &'static str,
    pub seed: u64,
    pub replicas: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Primary-replica occupancy at the final checkpoint.
    pub empirical: Vec<f64>,
    /// Stationary distribution of the chain.
    pub analytical: Vec<f64>,
    /// Sample standard deviation (n-1 denominator) of each state's final
    /// occupancy across replicas.
    pub sigma: Vec<f64>,
    /// Per-state 95% intervals centered on `empirical`, one per method.
    pub ci_cross_replica: Vec<(f64, f64)>,
    pub ci_wald: Vec<(f64, f64)>,
    /// TVD of the primary replica at the final checkpoint.
    pub final_tvd: f64,
}

/// Runs `replicas` independent trajectories (seeds `seed`, `seed+1`, ...,
/// replica 0 being the primary), snapshots occupancy at each checkpoint, and
/// reports TVD against the exact stationary distribution plus both styles of
/// confidence interval at the final checkpoint. Initial states are random;
/// no burn-in is applied, so the numbers show raw convergence from scratch.
pub fn convergence_study(
    matrix: &TransitionMatrix,
    profile: &DeviceProfile,
    seed: u64,
    checkpoints: &[usize],
    replicas: usize,
) -> Result<ConvergenceReport> {
    matrix.validate().map_err(Error::InvalidMatrix)?;
    if checkpoints.is_empty() {
        return Err(Error::invalid("checkpoints", "need at least one"));
    }
    if checkpoints[0] == 0 {
        return Err(Error::invalid("checkpoints", "steps must be at least 1"));
    }
    if !checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid(
            "checkpoints",
            "must be strictly increasing",
        ));
    }
    if replicas == 0 {
        return Err(Error::invalid("replicas", "need at least one"));
    }
    let analytical = steady_state(matrix)?;
    let _ = profile; // kept in the signature so study configs carry the full model

    let seeds: Vec<u64> = (0..replicas as u64).map(|k| seed.wrapping_add(k)).collect();
    let per_replica: Vec<Vec<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| occupancy_at_checkpoints(matrix, s, checkpoints))
        .collect();

    let last = checkpoints.len() - 1;
    let mut report_checkpoints = Vec::with_capacity(checkpoints.len());
    for (ci, &steps) in checkpoints.iter().enumerate() {
        let primary_tvd = tvd(&per_replica[0][ci], &analytical)?;
        let mut total = 0.0;
        for rep in &per_replica {
            total += tvd(&rep[ci], &analytical)?;
        }
        report_checkpoints.push(Checkpoint {
            steps,
            tvd: primary_tvd,
            mean_tvd: total / replicas as f64,
        });
    }

    let n_states = matrix.n();
    let empirical = per_replica[0][last].clone();
    let mut sigma = vec![0.0; n_states];
    if replicas > 1 {
        for i in 0..n_states {
            let mean =
                per_replica.iter().map(|r| r[last][i]).sum::<f64>() / replicas as f64;
            let ss: f64 = per_replica
                .iter()
                .map(|r| (r[last][i] - mean).powi(2))
                .sum();
            sigma[i] = (ss / (replicas - 1) as f64).sqrt();
        }
    }

    let samples = checkpoints[last];
    let mut ci_cross_replica = Vec::with_capacity(n_states);
    let mut ci_wald = Vec::with_capacity(n_states);
    for i in 0..n_states {
        ci_cross_replica.push(confidence_interval(
            empirical[i],
            sigma[i],
            samples,
            CiMethod::CrossReplica,
        )?);
        ci_wald.push(confidence_interval(
            empirical[i],
            sigma[i],
            samples,
            CiMethod::Wald,
        )?);
    }

    Ok(ConvergenceReport {
        generator: GENERATOR,
        seed,
        replicas,
        final_tvd: report_checkpoints[last].tvd,
        checkpoints: report_checkpoints,
        empirical,
        analytical: analytical.probs().to_vec(),
        sigma,
        ci_cross_replica,
        ci_wald,
    })
}

/// One trajectory's occupancy vectors at each checkpoint, without storing the
/// state sequence. Same draw order as [`simulate`] with a random start.
fn occupancy_at_checkpoints(
    matrix: &TransitionMatrix,
    seed: u64,
    checkpoints: &[usize],
) -> Vec<Vec<f64>> {
    let n = matrix.n();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut state = rng.uniform_usize(n);
    let mut counts = vec![0u64; n];
    let mut out = Vec::with_capacity(checkpoints.len());
    let total = *checkpoints.last().expect("validated nonempty");
    let mut next_checkpoint = 0;
    for tick in 0..total {
        counts[state] += 1;
        if tick + 1 == checkpoints[next_checkpoint] {
            let denom = checkpoints[next_checkpoint] as f64;
            out.push(counts.iter().map(|&c| c as f64 / denom).collect());
            next_checkpoint += 1;
        }
        if tick + 1 < total {
            state = rng.sample_row(matrix.row(state));
        }
    }
    out
}
