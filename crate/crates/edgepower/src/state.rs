use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// The five power states of the managed-device ladder, ordered from the
/// cheapest to the most expensive: `Off < Sleep < Idle < Active < Overloaded`.
///
/// `Off` and `Sleep` cannot serve work; a request arriving there incurs a
/// wake-up delay. `Active` and `Overloaded` serve work up to the device
/// capacity. The discriminants double as row/column indices into transition
/// matrices and device profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(usize)]
pub enum PowerState {
    Off = 0,
    Sleep = 1,
    Idle = 2,
    Active = 3,
    Overloaded = 4,
}

impl PowerState {
    /// Number of states in the canonical ladder.
    pub const COUNT: usize = 5;

    /// All states in index order.
    pub const ALL: [PowerState; Self::COUNT] = [
        PowerState::Off,
        PowerState::Sleep,
        PowerState::Idle,
        PowerState::Active,
        PowerState::Overloaded,
    ];

    /// The matrix/profile index of this state.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<PowerState> {
        Self::ALL.get(index).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            PowerState::Off => "off",
            PowerState::Sleep => "sleep",
            PowerState::Idle => "idle",
            PowerState::Active => "active",
            PowerState::Overloaded => "overloaded",
        }
    }

    /// Whether the state can serve demand at all.
    pub fn serves(self) -> bool {
        matches!(self, PowerState::Active | PowerState::Overloaded)
    }

    /// Whether the state is awake (powered up enough to react without a
    /// wake-up delay): `Idle` and above.
    pub fn awake(self) -> bool {
        self >= PowerState::Idle
    }

    /// One rung down the ladder, saturating at `Off`.
    pub fn step_down(self) -> PowerState {
        PowerState::from_index(self.index().saturating_sub(1)).unwrap_or(PowerState::Off)
    }

    /// One rung up the ladder, saturating at `Overloaded`.
    pub fn step_up(self) -> PowerState {
        PowerState::from_index(self.index() + 1).unwrap_or(PowerState::Overloaded)
    }
}

impl fmt::Display for PowerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PowerState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" | "s0" | "0" => Ok(PowerState::Off),
            "sleep" | "s1" | "1" => Ok(PowerState::Sleep),
            "idle" | "s2" | "2" => Ok(PowerState::Idle),
            "active" | "s3" | "3" => Ok(PowerState::Active),
            "overloaded" | "s4" | "4" => Ok(PowerState::Overloaded),
            other => Err(Error::invalid(
                "state",
                format!("unknown power state `{other}`"),
            )),
        }
    }
}
