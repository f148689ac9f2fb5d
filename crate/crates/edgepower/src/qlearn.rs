use crate::error::{Error, Result};
use crate::policy::{is_legal_action, legal_actions, step_cost, CostParams, PolicyDecision, Reason};
use crate::profile::DeviceProfile;
use crate::rng::SimRng;
use crate::state::PowerState;
use crate::workload::WorkloadTrace;

/// Number of demand buckets a learned policy can distinguish.
pub const DEMAND_LEVELS: usize = 3;

/// Buckets raw demand into what the table can see: `0` for none, `1` for
/// within capacity, `2` for over capacity.
pub fn demand_level(demand: u32, capacity: u32) -> usize {
    if demand == 0 {
        0
    } else if demand <= capacity {
        1
    } else {
        2
    }
}

/// Tabular action-value store over `(power state, demand level)` keys with
/// one entry per legal action. Values are *costs*, so smaller is better and
/// the greedy action is the argmin. Ties break to the lowest state index,
/// which keeps greedy play deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    /// Dense `[state][level][action-index]` layout; slots for illegal
    /// actions exist but are never read or written.
    values: Vec<f64>,
    alpha: f64,
    gamma: f64,
    /// Exploration rate used by [`QTable::decide`]. Zero makes decisions
    /// fully greedy and consume no randomness.
    pub epsilon: f64,
}

impl QTable {
    pub fn new(alpha: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 || alpha > 1.0 {
            return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1]")));
        }
        if !gamma.is_finite() || !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid("gamma", format!("{gamma} not in [0, 1)")));
        }
        if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid("epsilon", format!("{epsilon} not in [0, 1]")));
        }
        Ok(QTable {
            values: vec![0.0; PowerState::COUNT * DEMAND_LEVELS * PowerState::COUNT],
            alpha,
            gamma,
            epsilon,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn slot(state: PowerState, level: usize, action: PowerState) -> usize {
        debug_assert!(level < DEMAND_LEVELS);
        (state.index() * DEMAND_LEVELS + level) * PowerState::COUNT + action.index()
    }

    /// Learned cost of taking `action` from `(state, level)`.
    pub fn value(&self, state: PowerState, level: usize, action: PowerState) -> f64 {
        self.values[Self::slot(state, level, action)]
    }

    /// Smallest learned cost over the legal actions of `(state, level)`.
    pub fn min_value(&self, state: PowerState, level: usize) -> f64 {
        legal_actions(state)
            .iter()
            .map(|&a| self.value(state, level, a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Argmin over legal actions, first-listed (lowest index) on ties.
    pub fn greedy_action(&self, state: PowerState, level: usize) -> PowerState {
        let mut best = state;
        let mut best_value = f64::INFINITY;
        for &a in legal_actions(state) {
            let v = self.value(state, level, a);
            if v < best_value {
                best = a;
                best_value = v;
            }
        }
        best
    }

    /// One temporal-difference step:
    /// `Q(s,a) <- (1-alpha) Q(s,a) + alpha (cost + gamma * min_a' Q(s',a'))`.
    pub fn update(
        &mut self,
        state: PowerState,
        level: usize,
        action: PowerState,
        cost: f64,
        next_state: PowerState,
        next_level: usize,
    ) -> Result<()> {
        if !is_legal_action(state, action) {
            return Err(Error::IllegalAction {
                from: state.index(),
                to: action.index(),
            });
        }
        if level >= DEMAND_LEVELS || next_level >= DEMAND_LEVELS {
            return Err(Error::invalid(
                "level",
                format!("demand level must be below {DEMAND_LEVELS}"),
            ));
        }
        if !cost.is_finite() {
            return Err(Error::invalid("cost", format!("{cost} must be finite")));
        }
        let target = cost + self.gamma * self.min_value(next_state, next_level);
        let q = &mut self.values[Self::slot(state, level, action)];
        *q = (1.0 - self.alpha) * *q + self.alpha * target;
        Ok(())
    }

    /// Epsilon-greedy choice among the legal actions. Exploration consumes
    /// two draws (the epsilon check and the action pick); greedy play with
    /// `epsilon == 0` consumes none.
    pub fn decide(&self, state: PowerState, level: usize, rng: &mut SimRng) -> PolicyDecision {
        let explore = self.epsilon > 0.0 && rng.uniform_f64() < self.epsilon;
        let next = if explore {
            let legal = legal_actions(state);
            legal[rng.uniform_usize(legal.len())]
        } else {
            self.greedy_action(state, level)
        };
        PolicyDecision {
            next_state: next,
            reason: Reason::Learned,
            wake_up_delay: level > 0 && !state.awake(),
            anticipated_overload: level == 2,
        }
    }

    /// All populated `(state, level, action, value)` rows in index order.
    pub fn rows(&self) -> Vec<(PowerState, usize, PowerState, f64)> {
        let mut out = Vec::new();
        for s in PowerState::ALL {
            for level in 0..DEMAND_LEVELS {
                for &a in legal_actions(s) {
                    out.push((s, level, a, self.value(s, level, a)));
                }
            }
        }
        out
    }
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Exploration is annealed linearly from `epsilon_start` to
    /// `epsilon_end` over the first half of the trace, then held.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Seed for the exploration stream.
    pub seed: u64,
    pub capacity: u32,
    pub cost: CostParams,
    pub initial_state: PowerState,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 0.1,
            epsilon_end: 0.01,
            seed: 42,
            capacity: crate::policy::DEFAULT_CAPACITY,
            cost: CostParams::default(),
            initial_state: PowerState::Active,
        }
    }
}

/// Runs epsilon-greedy temporal-difference learning along a demand trace.
///
/// Each decision observes the current tick's demand bucket, picks an action
/// (the state for the next tick), and is charged `step_cost` with the demand
/// that action then faces: the next tick's arrivals minus what the chosen
/// state can serve. The returned table has `epsilon` reset to zero so it is
/// ready for greedy evaluation.
pub fn train(
    profile: &DeviceProfile,
    trace: &WorkloadTrace,
    cfg: &TrainingConfig,
) -> Result<QTable> {
    if profile.n() != PowerState::COUNT {
        return Err(Error::Dimension(format!(
            "learned policies need a 5-state profile, got {}",
            profile.n()
        )));
    }
    if trace.len() < 2 {
        return Err(Error::TraceTooShort {
            have: trace.len(),
            need: 2,
        });
    }
    cfg.cost.validate()?;
    for (name, e) in [
        ("epsilon_start", cfg.epsilon_start),
        ("epsilon_end", cfg.epsilon_end),
    ] {
        if !e.is_finite() || !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("{e} not in [0, 1]"),
            });
        }
    }
    if cfg.capacity == 0 {
        return Err(Error::invalid("capacity", "must be at least 1"));
    }

    let mut table = QTable::new(cfg.alpha, cfg.gamma, cfg.epsilon_start)?;
    let mut rng = SimRng::seed_from_u64(cfg.seed);
    let decisions = trace.len() - 1;
    let half = (decisions / 2).max(1);
    let mut state = cfg.initial_state;

    for t in 0..decisions {
        table.epsilon = if t >= half {
            cfg.epsilon_end
        } else {
            cfg.epsilon_start
                + (cfg.epsilon_end - cfg.epsilon_start) * t as f64 / half as f64
        };
        let level = demand_level(trace.demands[t], cfg.capacity);
        let action = table.decide(state, level, &mut rng).next_state;

        let next_demand = trace.demands[t + 1];
        let serving_capacity = if action.serves() { cfg.capacity } else { 0 };
        let unserved = next_demand.saturating_sub(serving_capacity);
        let cost = step_cost(state, action, unserved, profile, &cfg.cost)?;
        let next_level = demand_level(next_demand, cfg.capacity);
        table.update(state, level, action, cost, action, next_level)?;
        state = action;
    }

    table.epsilon = 0.0;
    Ok(table)
}
