use crate::error::{Error, Result};
use crate::state::PowerState;

/// Extra power drawn while switching between two states, and how long the
/// switch takes. The energy charged per transition is `extra_power_w *
/// latency_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCost {
    pub from: usize,
    pub to: usize,
    pub extra_power_w: f64,
    pub latency_s: f64,
}

impl EdgeCost {
    pub fn new(from: usize, to: usize, extra_power_w: f64, latency_s: f64) -> Self {
        EdgeCost {
            from,
            to,
            extra_power_w,
            latency_s,
        }
    }

    /// The same cost in both directions.
    pub fn symmetric(a: usize, b: usize, extra_power_w: f64, latency_s: f64) -> [Self; 2] {
        [
            EdgeCost::new(a, b, extra_power_w, latency_s),
            EdgeCost::new(b, a, extra_power_w, latency_s),
        ]
    }
}

/// Per-state power draw plus per-transition switching costs for one device
/// model. Transitions not listed in the edge costs are free and instantaneous
/// (zero extra energy, zero latency).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    name: String,
    labels: Vec<String>,
    state_power: Vec<f64>,
    /// Row-major n*n matrices; diagonal entries are always zero.
    edge_latency: Vec<f64>,
    edge_energy: Vec<f64>,
}

impl DeviceProfile {
    pub fn new(
        name: impl Into<String>,
        labels: Vec<String>,
        state_power: Vec<f64>,
        edges: &[EdgeCost],
    ) -> Result<Self> {
        let n = state_power.len();
        if n == 0 {
            return Err(Error::Dimension("profile has no states".into()));
        }
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {n} states",
                labels.len()
            )));
        }
        if state_power.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "state_power",
                "power draws must be finite and nonnegative",
            ));
        }
        let mut profile = DeviceProfile {
            name: name.into(),
            labels,
            state_power,
            edge_latency: vec![0.0; n * n],
            edge_energy: vec![0.0; n * n],
        };
        for e in edges {
            if e.from >= n || e.to >= n {
                return Err(Error::UnknownState {
                    index: e.from.max(e.to),
                    n,
                });
            }
            if e.from == e.to {
                return Err(Error::invalid(
                    "edges",
                    format!("self-edge on state {} cannot carry a cost", e.from),
                ));
            }
            if !(e.extra_power_w.is_finite() && e.extra_power_w >= 0.0)
                || !(e.latency_s.is_finite() && e.latency_s >= 0.0)
            {
                return Err(Error::invalid(
                    "edges",
                    "edge power and latency must be finite and nonnegative",
                ));
            }
            profile.edge_latency[e.from * n + e.to] = e.latency_s;
            profile.edge_energy[e.from * n + e.to] = e.extra_power_w * e.latency_s;
        }
        Ok(profile)
    }

    /// The default five-state edge-node profile: 0/2/4/8/12 W for
    /// off/sleep/idle/active/overloaded. Every management-graph edge takes
    /// 0.5 s and draws the mean of the endpoint powers on top, so e.g.
    /// idle -> active costs (4+8)/2 * 0.5 = 3 J.
    pub fn default_edge() -> Self {
        let labels = PowerState::ALL.iter().map(|s| s.label().into()).collect();
        let power = [0.0, 2.0, 4.0, 8.0, 12.0];
        let mut edges = Vec::new();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 4)] {
            edges.extend(EdgeCost::symmetric(a, b, (power[a] + power[b]) / 2.0, 0.5));
        }
        // Demand spikes can jump straight from idle to overloaded.
        edges.push(EdgeCost::new(2, 4, (power[2] + power[4]) / 2.0, 0.5));
        DeviceProfile::new("edge-default", labels, power.to_vec(), &edges)
            .expect("constants are valid")
    }

    /// A four-state Raspberry Pi 4 profile from published idle/load power
    /// measurements: 6.4 W busy, 2.7 W idle, 2.0 W standby, 0.5 W deep
    /// sleep. Waking from idle into the busy state draws an extra 1.5 W for
    /// half a second (0.75 J); the remaining switches are below measurement
    /// resolution and modeled as free.
    pub fn raspberry_pi4() -> Self {
        let labels = ["busy", "idle", "standby", "deep-sleep"]
            .map(String::from)
            .to_vec();
        let power = vec![6.4, 2.7, 2.0, 0.5];
        let edges = [EdgeCost::new(0, 1, 1.5, 0.5)];
        DeviceProfile::new("raspberry-pi-4", labels, power, &edges).expect("constants are valid")
    }

    pub fn n(&self) -> usize {
        self.state_power.len()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn state_power(&self) -> &[f64] {
        &self.state_power
    }

    /// Power draw of state `i` in watts. Panics if `i` is out of range; use
    /// [`DeviceProfile::n`] to check first when the index is untrusted.
    pub fn power(&self, i: usize) -> f64 {
        self.state_power[i]
    }

    /// Energy in joules charged when the device switches `from -> to`.
    /// Staying put is free by construction.
    pub fn transition_energy(&self, from: usize, to: usize) -> Result<f64> {
        let n = self.n();
        if from >= n || to >= n {
            return Err(Error::UnknownState {
                index: from.max(to),
                n,
            });
        }
        Ok(self.edge_energy[from * n + to])
    }

    /// Switching latency in seconds for `from -> to`.
    pub fn transition_latency(&self, from: usize, to: usize) -> Result<f64> {
        let n = self.n();
        if from >= n || to >= n {
            return Err(Error::UnknownState {
                index: from.max(to),
                n,
            });
        }
        Ok(self.edge_latency[from * n + to])
    }

    /// A copy with every power draw (state and edge) multiplied by `factor`,
    /// for modeling a device of the same shape but a different wattage class.
    /// Latencies are unchanged.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::invalid("factor", format!("{factor} must be > 0")));
        }
        let mut out = self.clone();
        out.name = format!("{}*{factor}", self.name);
        for w in out.state_power.iter_mut() {
            *w *= factor;
        }
        for e in out.edge_energy.iter_mut() {
            *e *= factor;
        }
        Ok(out)
    }
}
