use crate::error::{Error, Result};
use crate::montecarlo::TICK_SECONDS;
use crate::profile::DeviceProfile;
use crate::state::PowerState;

/// How many demand units a serving state can absorb per tick by default.
pub const DEFAULT_CAPACITY: u32 = 2;

/// Why a policy picked its next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    /// Drawn from a transition-matrix row (the unmanaged baseline).
    Sampled,
    StepUp,
    StepDown,
    Hold,
    /// Woken ahead of predicted demand.
    Prewake,
    /// Chosen by a learned value table.
    Learned,
}

impl Reason {
    pub fn label(self) -> &'static str {
        match self {
            Reason::Sampled => "sampled",
            Reason::StepUp => "step-up",
            Reason::StepDown => "step-down",
            Reason::Hold => "hold",
            Reason::Prewake => "prewake",
            Reason::Learned => "learned",
        }
    }
}

/// A policy's verdict for the next tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDecision {
    pub next_state: PowerState,
    pub reason: Reason,
    /// Demand arrived while the device was off or asleep, so this decision
    /// is already too late for the current tick's requests.
    pub wake_up_delay: bool,
    /// The policy expects the next tick's demand to exceed capacity.
    pub anticipated_overload: bool,
}

impl PolicyDecision {
    fn new(next_state: PowerState, reason: Reason) -> Self {
        PolicyDecision {
            next_state,
            reason,
            wake_up_delay: false,
            anticipated_overload: false,
        }
    }
}

/// Weights of the per-tick cost a learned policy minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Multiplies the joules charged during the tick.
    pub energy_weight: f64,
    /// Multiplies the switching energy of the chosen action.
    pub switch_weight: f64,
    /// Charged per demand unit that went unserved.
    pub delay_penalty: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            energy_weight: 1.0,
            switch_weight: 1.0,
            delay_penalty: 10.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("energy_weight", self.energy_weight),
            ("switch_weight", self.switch_weight),
            ("delay_penalty", self.delay_penalty),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} must be finite and >= 0"),
                });
            }
        }
        Ok(())
    }

    /// Upper bound on any single-tick cost under the default device profile,
    /// used to sanity-check learned values: `energy_weight * max state energy
    /// + switch_weight * max edge energy + delay_penalty * max unserved`.
    pub fn max_step_cost(&self, profile: &DeviceProfile, max_unserved: u32) -> f64 {
        let max_power = profile
            .state_power()
            .iter()
            .fold(0.0f64, |a, &b| a.max(b));
        let max_edge = (0..profile.n())
            .flat_map(|i| (0..profile.n()).map(move |j| (i, j)))
            .map(|(i, j)| profile.transition_energy(i, j).expect("in range"))
            .fold(0.0f64, f64::max);
        self.energy_weight * max_power * TICK_SECONDS
            + self.switch_weight * max_edge
            + self.delay_penalty * max_unserved as f64
    }
}

/// Tuning for the rule-based reactive policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactiveParams {
    /// Consecutive zero-demand ticks tolerated before stepping down.
    pub step_down_patience: u32,
    pub capacity: u32,
}

impl Default for ReactiveParams {
    fn default() -> Self {
        ReactiveParams {
            step_down_patience: 3,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

/// Tuning for the forecast-driven policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveParams {
    pub capacity: u32,
}

impl Default for PredictiveParams {
    fn default() -> Self {
        PredictiveParams {
            capacity: DEFAULT_CAPACITY,
        }
    }
}

/// The management graph: which states an action may move to from `s`.
/// Neighbours on the ladder plus holding still, with one extra edge letting
/// a demand spike push `Idle` straight to `Overloaded`. Slices are ordered
/// by state index, which doubles as the deterministic tie-break order for
/// learned policies.
pub fn legal_actions(s: PowerState) -> &'static [PowerState] {
    use PowerState::*;
    match s {
        Off => &[Off, Sleep],
        Sleep => &[Off, Sleep, Idle],
        Idle => &[Sleep, Idle, Active, Overloaded],
        Active => &[Idle, Active, Overloaded],
        Overloaded => &[Active, Overloaded],
    }
}

/// Whether `from -> to` is a single legal management action.
pub fn is_legal_action(from: PowerState, to: PowerState) -> bool {
    legal_actions(from).contains(&to)
}

/// Demand-threshold rules reacting to the tick that just happened:
/// over-capacity demand in `Active` escalates to `Overloaded`; any demand
/// below `Active` wakes one rung (flagging the wake-up delay if the device
/// was off or asleep); a zero-demand streak of at least `step_down_patience`
/// ticks steps one rung down; otherwise hold.
///
/// `idle_ticks` counts consecutive zero-demand ticks including the current
/// one; callers maintain it and reset on any demand.
pub fn reactive_decide(
    current: PowerState,
    observed_demand: u32,
    idle_ticks: u32,
    params: &ReactiveParams,
) -> PolicyDecision {
    use PowerState::*;
    if observed_demand > params.capacity && current == Active {
        return PolicyDecision::new(Overloaded, Reason::StepUp);
    }
    if observed_demand > 0 && current < Active {
        let mut d = PolicyDecision::new(current.step_up(), Reason::StepUp);
        d.wake_up_delay = !current.awake();
        return d;
    }
    if observed_demand == 0 && idle_ticks >= params.step_down_patience && current > Off {
        return PolicyDecision::new(current.step_down(), Reason::StepDown);
    }
    PolicyDecision::new(current, Reason::Hold)
}

/// Forecast-driven rules: descend one rung toward `Sleep` when the next tick
/// looks quiet, wake toward `Active` ahead of predicted demand, and drain
/// back to `Active` from `Overloaded`. The floor is `Sleep`, not `Off`, so a
/// bad zero-prediction costs a wake-up, not a cold boot. Predictions are
/// real-valued; they are rounded to the nearest integer before comparing
/// against zero and capacity.
pub fn predictive_decide(
    current: PowerState,
    predicted_demand: f64,
    params: &PredictiveParams,
) -> Result<PolicyDecision> {
    use PowerState::*;
    if !predicted_demand.is_finite() || predicted_demand < 0.0 {
        return Err(Error::invalid(
            "predicted_demand",
            format!("{predicted_demand} must be finite and >= 0"),
        ));
    }
    let predicted = predicted_demand.round() as u32;
    let decision = if predicted == 0 {
        if current > Sleep {
            PolicyDecision::new(current.step_down(), Reason::StepDown)
        } else {
            PolicyDecision::new(current, Reason::Hold)
        }
    } else if current < Active {
        PolicyDecision::new(current.step_up(), Reason::Prewake)
    } else if current == Active {
        let mut d = PolicyDecision::new(Active, Reason::Hold);
        d.anticipated_overload = predicted > params.capacity;
        d
    } else {
        // Overloaded with demand still predicted: drain one rung.
        PolicyDecision::new(Active, Reason::StepDown)
    };
    Ok(decision)
}

/// Weighted one-tick cost of taking `action` from `state`: energy for the
/// tick spent in `state`, switching energy of the action, and the penalty
/// for demand the action failed to serve.
pub fn step_cost(
    state: PowerState,
    action: PowerState,
    unserved: u32,
    profile: &DeviceProfile,
    params: &CostParams,
) -> Result<f64> {
    params.validate()?;
    if !is_legal_action(state, action) {
        return Err(Error::IllegalAction {
            from: state.index(),
            to: action.index(),
        });
    }
    if profile.n() != PowerState::COUNT {
        return Err(Error::Dimension(format!(
            "ladder costs need a 5-state profile, got {}",
            profile.n()
        )));
    }
    let energy = profile.power(state.index()) * TICK_SECONDS;
    let switch = profile
        .transition_energy(state.index(), action.index())
        .expect("ladder states are in range");
    Ok(params.energy_weight * energy
        + params.switch_weight * switch
        + params.delay_penalty * unserved as f64)
}
