use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Where a trace came from, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Generated { lambda: f64, seed: u64 },
    File(String),
    /// Anything produced by other generators (bursty arrivals, hand-written
    /// fixtures); the string describes the recipe.
    Custom(String),
}

/// A demand trace: how many service requests arrive at each tick.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub demands: Vec<u32>,
    pub source: TraceSource,
}

impl WorkloadTrace {
    pub fn from_demands(demands: Vec<u32>, source: TraceSource) -> Result<Self> {
        if demands.is_empty() {
            return Err(Error::invalid("demands", "trace must not be empty"));
        }
        Ok(WorkloadTrace { demands, source })
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn get(&self, tick: usize) -> Option<u32> {
        self.demands.get(tick).copied()
    }

    /// Number of ticks with nonzero demand among the first `ticks`.
    pub fn demand_ticks(&self, ticks: usize) -> usize {
        self.demands[..ticks.min(self.len())]
            .iter()
            .filter(|&&w| w > 0)
            .count()
    }

    pub fn total(&self) -> u64 {
        self.demands.iter().map(|&w| w as u64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() as f64 / self.len() as f64
    }
}

/// Draws `ticks` iid Poisson(`lambda`) demands from the given seed.
pub fn generate_poisson(lambda: f64, ticks: usize, seed: u64) -> Result<WorkloadTrace> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid("lambda", format!("{lambda} must be > 0")));
    }
    if ticks == 0 {
        return Err(Error::invalid("ticks", "must be at least 1"));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let demands = (0..ticks).map(|_| rng.poisson(lambda)).collect();
    WorkloadTrace::from_demands(demands, TraceSource::Generated { lambda, seed })
}

/// Two-phase on/off arrivals: geometric lulls with zero demand alternate
/// with geometric bursts where each tick brings `1 + Poisson(burst_lambda)`
/// requests. `burst_start` is the per-tick probability of a lull turning
/// into a burst, `burst_stop` the reverse. The phase chain starts in a lull.
///
/// This produces the short-lull, clustered-arrival pattern typical of edge
/// gateways, where sleeping through a lull has a real chance of being
/// punished by the next burst.
pub fn generate_bursty(
    burst_start: f64,
    burst_stop: f64,
    burst_lambda: f64,
    ticks: usize,
    seed: u64,
) -> Result<WorkloadTrace> {
    for (name, p) in [("burst_start", burst_start), ("burst_stop", burst_stop)] {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("{p} is outside [0, 1]"),
            });
        }
    }
    if !burst_lambda.is_finite() || burst_lambda < 0.0 {
        return Err(Error::invalid(
            "burst_lambda",
            format!("{burst_lambda} must be >= 0"),
        ));
    }
    if ticks == 0 {
        return Err(Error::invalid("ticks", "must be at least 1"));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let mut bursting = false;
    let mut demands = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        let flip = rng.uniform_f64();
        bursting = if bursting {
            flip >= burst_stop
        } else {
            flip < burst_start
        };
        if bursting {
            let extra = if burst_lambda > 0.0 {
                rng.poisson(burst_lambda)
            } else {
                0
            };
            demands.push(1 + extra);
        } else {
            demands.push(0);
        }
    }
    WorkloadTrace::from_demands(
        demands,
        TraceSource::Custom(format!(
            "bursty(start={burst_start},stop={burst_stop},lambda={burst_lambda},seed={seed})"
        )),
    )
}

/// Reads a trace file: one nonnegative integer per line, blank lines
/// ignored. Parse failures name the offending 1-based line.
pub fn load_trace(path: impl AsRef<Path>) -> Result<WorkloadTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut demands = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let token = raw.trim();
        if token.is_empty() {
            continue;
        }
        let value: i64 = token.parse().map_err(|_| Error::TraceParse {
            line,
            reason: format!("`{token}` is not an integer"),
        })?;
        if value < 0 {
            return Err(Error::NegativeDemand { line, value });
        }
        let demand = u32::try_from(value).map_err(|_| Error::TraceParse {
            line,
            reason: format!("{value} exceeds the demand limit of {}", u32::MAX),
        })?;
        demands.push(demand);
    }
    WorkloadTrace::from_demands(demands, TraceSource::File(path.display().to_string()))
}

/// Writes a trace in the same one-integer-per-line format.
pub fn save_trace(trace: &WorkloadTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::with_capacity(trace.len() * 2);
    for w in &trace.demands {
        text.push_str(&w.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// One-step-ahead demand predictor.
#[derive(Debug, Clone)]
pub enum Forecaster {
    /// `estimate <- alpha * observed + (1 - alpha) * estimate`; the updated
    /// estimate doubles as the prediction for the next tick.
    ExponentialSmoothing { alpha: f64, estimate: f64 },
    /// Returns the true next demand plus seeded Gaussian noise, floored at
    /// zero. With zero noise this is a perfect one-step oracle, the upper
    /// bound any learned predictor could reach.
    Oracle { noise_sd: f64, rng: SimRng },
}

impl Forecaster {
    pub fn exponential_smoothing(alpha: f64, initial_estimate: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 || alpha > 1.0 {
            return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1]")));
        }
        if !initial_estimate.is_finite() || initial_estimate < 0.0 {
            return Err(Error::invalid(
                "initial_estimate",
                format!("{initial_estimate} must be >= 0"),
            ));
        }
        Ok(Forecaster::ExponentialSmoothing {
            alpha,
            estimate: initial_estimate,
        })
    }

    pub fn oracle(noise_sd: f64, seed: u64) -> Result<Self> {
        if !noise_sd.is_finite() || noise_sd < 0.0 {
            return Err(Error::invalid(
                "noise_sd",
                format!("{noise_sd} must be >= 0"),
            ));
        }
        Ok(Forecaster::Oracle {
            noise_sd,
            rng: SimRng::seed_from_u64(seed),
        })
    }

    /// Consumes this tick's observation and returns the prediction for the
    /// next tick. The oracle variant needs `true_next` and fails without it
    /// (end of trace, or per-tick assignment inside a fleet).
    pub fn forecast_step(&mut self, observed: u32, true_next: Option<u32>) -> Result<f64> {
        match self {
            Forecaster::ExponentialSmoothing { alpha, estimate } => {
                *estimate = *alpha * observed as f64 + (1.0 - *alpha) * *estimate;
                Ok(*estimate)
            }
            Forecaster::Oracle { noise_sd, rng } => {
                let next = true_next.ok_or(Error::MissingTrueNext)?;
                if *noise_sd == 0.0 {
                    return Ok(next as f64);
                }
                Ok((next as f64 + rng.gaussian(0.0, *noise_sd)).max(0.0))
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Forecaster::ExponentialSmoothing { .. } => "exponential-smoothing",
            Forecaster::Oracle { .. } => "oracle",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_trace_matches_moments_within_3_percent() {
        for lambda in [0.3, 1.0, 2.0] {
            let trace = generate_poisson(lambda, 100_000, 42).unwrap();
            let mean = trace.mean();
            let var = trace
                .demands
                .iter()
                .map(|&w| (w as f64 - mean).powi(2))
                .sum::<f64>()
                / trace.len() as f64;
            assert!(
                (mean - lambda).abs() < 0.03 * lambda,
                "lambda {lambda}: mean {mean}"
            );
            assert!(
                (var - lambda).abs() < 0.03 * lambda,
                "lambda {lambda}: var {var}"
            );
        }
    }

    #[test]
    fn poisson_zero_fraction_matches_exp() {
        let trace = generate_poisson(0.3, 100_000, 7).unwrap();
        let zeros = trace.demands.iter().filter(|&&w| w == 0).count() as f64;
        let frac = zeros / trace.len() as f64;
        assert!((frac - (-0.3f64).exp()).abs() < 0.01, "zero fraction {frac}");
    }

    #[test]
    fn poisson_rejects_bad_parameters() {
        assert!(generate_poisson(0.0, 10, 1).is_err());
        assert!(generate_poisson(-1.0, 10, 1).is_err());
        assert!(generate_poisson(f64::NAN, 10, 1).is_err());
        assert!(generate_poisson(1.0, 0, 1).is_err());
    }

    #[test]
    fn poisson_is_seed_deterministic() {
        let a = generate_poisson(1.5, 1_000, 9).unwrap();
        let b = generate_poisson(1.5, 1_000, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_poisson(1.5, 1_000, 10).unwrap();
        assert_ne!(a.demands, c.demands);
    }

    #[test]
    fn bursty_trace_alternates_lulls_and_bursts() {
        let trace = generate_bursty(0.5, 0.125, 0.8, 50_000, 3).unwrap();
        let zeros = trace.demands.iter().filter(|&&w| w == 0).count() as f64;
        let frac = zeros / trace.len() as f64;
        // Stationary lull share = stop / (start + stop) = 0.2.
        assert!((frac - 0.2).abs() < 0.02, "lull share {frac}");
        // Burst ticks always deliver at least one request.
        assert!(trace.demands.iter().all(|&w| w == 0 || w >= 1));
        let burst_mean = trace
            .demands
            .iter()
            .filter(|&&w| w > 0)
            .map(|&w| w as f64)
            .sum::<f64>()
            / (trace.len() as f64 - zeros);
        assert!((burst_mean - 1.8).abs() < 0.05, "burst mean {burst_mean}");
    }

    #[test]
    fn bursty_rejects_bad_parameters() {
        assert!(generate_bursty(1.5, 0.1, 1.0, 10, 1).is_err());
        assert!(generate_bursty(0.5, -0.1, 1.0, 10, 1).is_err());
        assert!(generate_bursty(0.5, 0.1, -1.0, 10, 1).is_err());
        assert!(generate_bursty(0.5, 0.1, 1.0, 0, 1).is_err());
    }

    #[test]
    fn trace_round_trips_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.txt");
        let original = generate_poisson(1.0, 500, 4).unwrap();
        save_trace(&original, &path).unwrap();
        let loaded = load_trace(&path).unwrap();
        assert_eq!(loaded.demands, original.demands);
        assert!(matches!(loaded.source, TraceSource::File(_)));
    }

    #[test]
    fn load_trace_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "3\n\n4\nseven\n").unwrap();
        match load_trace(&path).unwrap_err() {
            Error::TraceParse { line, reason } => {
                assert_eq!(line, 4);
                assert!(reason.contains("seven"));
            }
            other => panic!("unexpected error {other:?}"),
        }

        std::fs::write(&path, "-1\n2\n").unwrap();
        match load_trace(&path).unwrap_err() {
            Error::NegativeDemand { line, value } => {
                assert_eq!(line, 1);
                assert_eq!(value, -1);
            }
            other => panic!("unexpected error {other:?}"),
        }

        std::fs::write(&path, "5000000000\n").unwrap();
        assert!(matches!(
            load_trace(&path).unwrap_err(),
            Error::TraceParse { line: 1, .. }
        ));

        std::fs::write(&path, "\n\n").unwrap();
        assert!(load_trace(&path).is_err(), "all-blank file has no records");
    }

    #[test]
    fn smoothing_forecaster_frozen_example() {
        // alpha 0.5, estimate 4, observe 8 -> 6.
        let mut f = Forecaster::exponential_smoothing(0.5, 4.0).unwrap();
        assert_eq!(f.forecast_step(8, None).unwrap(), 6.0);
        // The estimate carries forward: observe 0 -> 3.
        assert_eq!(f.forecast_step(0, None).unwrap(), 3.0);
    }

    #[test]
    fn smoothing_prediction_stays_between_estimate_and_observation() {
        let mut f = Forecaster::exponential_smoothing(0.3, 2.0).unwrap();
        let mut estimate = 2.0f64;
        let mut rng = SimRng::seed_from_u64(11);
        for _ in 0..1_000 {
            let observed = rng.poisson(1.2);
            let lo = estimate.min(observed as f64);
            let hi = estimate.max(observed as f64);
            let predicted = f.forecast_step(observed, None).unwrap();
            assert!(predicted >= lo && predicted <= hi);
            estimate = predicted;
        }
    }

    #[test]
    fn smoothing_alpha_one_tracks_the_observation() {
        let mut f = Forecaster::exponential_smoothing(1.0, 9.0).unwrap();
        assert_eq!(f.forecast_step(3, None).unwrap(), 3.0);
        assert_eq!(f.forecast_step(0, None).unwrap(), 0.0);
    }

    #[test]
    fn forecaster_parameter_validation() {
        assert!(Forecaster::exponential_smoothing(0.0, 1.0).is_err());
        assert!(Forecaster::exponential_smoothing(1.1, 1.0).is_err());
        assert!(Forecaster::exponential_smoothing(0.5, -1.0).is_err());
        assert!(Forecaster::oracle(-0.5, 1).is_err());
        assert!(Forecaster::oracle(0.0, 1).is_ok());
    }

    #[test]
    fn noiseless_oracle_is_the_trace_shifted_by_one() {
        let trace = generate_poisson(1.0, 200, 8).unwrap();
        let mut f = Forecaster::oracle(0.0, 99).unwrap();
        for t in 0..trace.len() - 1 {
            let predicted = f
                .forecast_step(trace.demands[t], Some(trace.demands[t + 1]))
                .unwrap();
            assert_eq!(predicted, trace.demands[t + 1] as f64);
        }
        assert!(matches!(
            f.forecast_step(0, None),
            Err(Error::MissingTrueNext)
        ));
    }

    #[test]
    fn noisy_oracle_is_floored_at_zero_and_deterministic() {
        let mut a = Forecaster::oracle(5.0, 123).unwrap();
        let mut b = Forecaster::oracle(5.0, 123).unwrap();
        for t in 0..500u32 {
            let pa = a.forecast_step(0, Some(t % 3)).unwrap();
            let pb = b.forecast_step(0, Some(t % 3)).unwrap();
            assert_eq!(pa, pb);
            assert!(pa >= 0.0);
        }
    }

    #[test]
    fn demand_ticks_counts_nonzero_prefix() {
        let trace =
            WorkloadTrace::from_demands(vec![0, 2, 0, 1, 1], TraceSource::Custom("x".into()))
                .unwrap();
        assert_eq!(trace.demand_ticks(5), 3);
        assert_eq!(trace.demand_ticks(2), 1);
        assert_eq!(trace.demand_ticks(99), 3);
        assert_eq!(trace.total(), 4);
    }
}
