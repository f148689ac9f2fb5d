//! The five experiment commands. Each reads a resolved [`Experiment`],
//! writes CSV files into the output directory, and returns a plain-text
//! summary for stdout and the `<command>_summary.txt` file.
//!
//! Nothing here reads clocks, process ids, or filesystem order: with a
//! fixed seed, every byte of every output file is reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use edgepower::{
    convergence_study, expected_power, fleet_expected_energy, late_service_fraction,
    overload_fraction, run_policy, simulate_fleet, steady_state, train, CostParams,
    ForecasterSpec, PolicySpec, PowerState, PredictiveParams, ReactiveParams, SimulationRun,
    StationaryDistribution, TrainingConfig, TransitionMatrix, WorkloadTrace,
};

use crate::config::{
    Experiment, ForecasterSection, PolicySection, DEFAULT_TRAINING_TICKS, TRAINING_SEED_OFFSET,
};
use crate::csvfmt::fmt_f64;

fn write_output(out_dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let path = out_dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn residual_linf(pi: &StationaryDistribution, matrix: &TransitionMatrix) -> f64 {
    let n = matrix.n();
    (0..n)
        .map(|j| {
            let image: f64 = (0..n).map(|i| pi[i] * matrix.get(i, j)).sum();
            (image - pi[j]).abs()
        })
        .fold(0.0f64, f64::max)
}

/// Analytical steady-state report: π, expected power, solver residual.
pub fn cmd_steady(exp: &Experiment, out_dir: &Path) -> Result<String> {
    let pi = steady_state(&exp.matrix)?;
    let watts = expected_power(&pi, &exp.profile)?;
    let residual = residual_linf(&pi, &exp.matrix);

    let mut csv = String::from("state,label,pi,power_w\n");
    for (i, label) in exp.profile.labels().iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{label},{},{}",
            fmt_f64(pi[i]),
            fmt_f64(exp.profile.power(i))
        );
    }
    write_output(out_dir, "steady.csv", &csv)?;

    let mut summary = String::from("command: steady\n");
    let _ = writeln!(summary, "states: {}", exp.matrix.n());
    let _ = writeln!(
        summary,
        "pi: [{}]",
        pi.iter().map(|&p| fmt_f64(p)).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(summary, "expected_power_w: {}", fmt_f64(watts));
    let _ = writeln!(summary, "residual_linf: {}", fmt_f64(residual));
    Ok(summary)
}

/// Monte Carlo convergence study: TVD per checkpoint plus both styles of
/// 95% interval at the final checkpoint.
pub fn cmd_converge(exp: &Experiment, out_dir: &Path) -> Result<String> {
    let report = convergence_study(
        &exp.matrix,
        &exp.profile,
        exp.sim.seed,
        &exp.checkpoints,
        exp.replicas,
    )?;

    let mut csv = String::from("steps,primary_tvd,mean_tvd\n");
    for cp in &report.checkpoints {
        let _ = writeln!(
            csv,
            "{},{},{}",
            cp.steps,
            fmt_f64(cp.tvd),
            fmt_f64(cp.mean_tvd)
        );
    }
    write_output(out_dir, "converge.csv", &csv)?;

    let mut ci_csv = String::from(
        "state,label,empirical,analytical,sigma,cross_replica_low,cross_replica_high,wald_low,wald_high\n",
    );
    for (i, label) in exp.profile.labels().iter().enumerate() {
        let (cr_lo, cr_hi) = report.ci_cross_replica[i];
        let (w_lo, w_hi) = report.ci_wald[i];
        let _ = writeln!(
            ci_csv,
            "{i},{label},{},{},{},{},{},{},{}",
            fmt_f64(report.empirical[i]),
            fmt_f64(report.analytical[i]),
            fmt_f64(report.sigma[i]),
            fmt_f64(cr_lo),
            fmt_f64(cr_hi),
            fmt_f64(w_lo),
            fmt_f64(w_hi)
        );
    }
    write_output(out_dir, "converge_ci.csv", &ci_csv)?;

    let mut summary = String::from("command: converge\n");
    let _ = writeln!(summary, "generator: {}", report.generator);
    let _ = writeln!(summary, "seed: {}", report.seed);
    let _ = writeln!(summary, "replicas: {}", report.replicas);
    let _ = writeln!(
        summary,
        "checkpoints: [{}]",
        report
            .checkpoints
            .iter()
            .map(|c| c.steps.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    if let Some(last) = report.checkpoints.last() {
        let _ = writeln!(summary, "final_mean_tvd: {}", fmt_f64(last.mean_tvd));
    }
    let _ = writeln!(summary, "final_primary_tvd: {}", fmt_f64(report.final_tvd));
    Ok(summary)
}

/// Builds the runnable policy for one config entry, training a value table
/// from the experiment's workload generator when asked for.
fn resolve_policy(section: &PolicySection, exp: &Experiment) -> Result<PolicySpec> {
    let spec = match section {
        PolicySection::Fixed { capacity } => PolicySpec::FixedMatrix {
            capacity: capacity.unwrap_or(edgepower::DEFAULT_CAPACITY),
        },
        PolicySection::Reactive {
            step_down_patience,
            capacity,
        } => PolicySpec::Reactive(ReactiveParams {
            step_down_patience: step_down_patience.unwrap_or(3),
            capacity: capacity.unwrap_or(edgepower::DEFAULT_CAPACITY),
        }),
        PolicySection::Predictive {
            capacity,
            forecaster,
        } => {
            let forecaster = match forecaster {
                None | Some(ForecasterSection::Oracle { noise_sd: None }) => {
                    ForecasterSpec::Oracle { noise_sd: 0.0 }
                }
                Some(ForecasterSection::Oracle { noise_sd: Some(sd) }) => {
                    ForecasterSpec::Oracle { noise_sd: *sd }
                }
                Some(ForecasterSection::Smoothing {
                    alpha,
                    initial_estimate,
                }) => ForecasterSpec::ExponentialSmoothing {
                    alpha: alpha.unwrap_or(0.5),
                    initial_estimate: initial_estimate.unwrap_or(0.0),
                },
            };
            PolicySpec::Predictive {
                params: PredictiveParams {
                    capacity: capacity.unwrap_or(edgepower::DEFAULT_CAPACITY),
                },
                forecaster,
            }
        }
        PolicySection::Qlearning(q) => {
            let capacity = q.capacity.unwrap_or(edgepower::DEFAULT_CAPACITY);
            let training_ticks = q.training_ticks.unwrap_or(DEFAULT_TRAINING_TICKS);
            let training_seed = q
                .training_seed
                .unwrap_or(exp.sim.seed.wrapping_add(TRAINING_SEED_OFFSET));
            let defaults = TrainingConfig::default();
            let cost_defaults = CostParams::default();
            let cfg = TrainingConfig {
                alpha: q.alpha.unwrap_or(defaults.alpha),
                gamma: q.gamma.unwrap_or(defaults.gamma),
                epsilon_start: q.epsilon_start.unwrap_or(defaults.epsilon_start),
                epsilon_end: q.epsilon_end.unwrap_or(defaults.epsilon_end),
                seed: training_seed,
                capacity,
                cost: CostParams {
                    energy_weight: q.energy_weight.unwrap_or(cost_defaults.energy_weight),
                    switch_weight: q.switch_weight.unwrap_or(cost_defaults.switch_weight),
                    delay_penalty: q.delay_penalty.unwrap_or(cost_defaults.delay_penalty),
                },
                initial_state: PowerState::Active,
            };
            let training = exp
                .workload
                .build(training_ticks, training_seed, &exp.base_dir)
                .context("building the training trace")?;
            let table = train(&exp.profile, &training, &cfg).context("training the value table")?;
            PolicySpec::Learned { table, capacity }
        }
    };
    Ok(spec)
}

struct PolicyMetrics {
    label: String,
    energy_joules: f64,
    mean_power_w: f64,
    overload_fraction: f64,
    late_service_fraction: f64,
}

fn measure(run: &SimulationRun, trace: &WorkloadTrace, steps: usize, label: String) -> PolicyMetrics {
    PolicyMetrics {
        label,
        energy_joules: run.energy_joules,
        mean_power_w: run.energy_joules / steps as f64,
        overload_fraction: overload_fraction(run),
        late_service_fraction: late_service_fraction(run, trace, steps),
    }
}

/// Runs every configured policy on the identical trace and seed and reports
/// energy, mean power, overload share, and late service, with percentage
/// deltas against the reactive baseline next to the configured targets.
pub fn cmd_compare(exp: &Experiment, out_dir: &Path) -> Result<String> {
    if exp.policies.len() < 2 {
        bail!("compare needs at least two entries in [[policies]]");
    }
    let Some(baseline_idx) = exp.policies.iter().position(|p| p.is_reactive()) else {
        bail!("compare needs a reactive baseline among [[policies]]");
    };

    let steps = exp.sim.steps;
    // One extra tick so one-step-ahead forecasters have a true next value
    // at the final decision.
    let trace = exp.workload.build(steps + 1, exp.sim.seed, &exp.base_dir)?;

    let mut metrics = Vec::new();
    let mut label_counts: Vec<(String, usize)> = Vec::new();
    for section in &exp.policies {
        let spec = resolve_policy(section, exp)?;
        let base_label = spec.label().to_string();
        let label = match label_counts.iter_mut().find(|(l, _)| *l == base_label) {
            Some((_, count)) => {
                *count += 1;
                format!("{base_label}-{count}")
            }
            None => {
                label_counts.push((base_label.clone(), 1));
                base_label
            }
        };
        let run = run_policy(&spec, &exp.matrix, &exp.profile, &trace, &exp.sim)
            .with_context(|| format!("running the {label} policy"))?;
        metrics.push(measure(&run, &trace, steps, label));
    }

    let base = &metrics[baseline_idx];
    let base_energy = base.energy_joules;
    let base_overload = base.overload_fraction;
    let delta_pct = |base: f64, value: f64| -> Option<f64> {
        (base != 0.0).then(|| (base - value) / base * 100.0)
    };

    let mut csv = String::from(
        "policy,energy_joules,mean_power_w,overload_fraction,late_service_fraction,\
         energy_delta_pct,overload_delta_pct,target_energy_delta_pct,target_overload_delta_pct\n",
    );
    let mut summary = String::from("command: compare\n");
    let _ = writeln!(summary, "workload: {}", exp.workload.label());
    let _ = writeln!(summary, "steps: {steps}");
    let _ = writeln!(summary, "seed: {}", exp.sim.seed);
    let _ = writeln!(summary, "baseline: {}", base.label);

    for (i, m) in metrics.iter().enumerate() {
        let is_baseline = i == baseline_idx;
        let energy_delta = delta_pct(base_energy, m.energy_joules);
        let overload_delta = delta_pct(base_overload, m.overload_fraction);
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let (target_e, target_o) = if is_baseline {
            (String::new(), String::new())
        } else {
            (
                fmt_f64(exp.target_energy_delta_pct),
                fmt_f64(exp.target_overload_delta_pct),
            )
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{target_e},{target_o}",
            m.label,
            fmt_f64(m.energy_joules),
            fmt_f64(m.mean_power_w),
            fmt_f64(m.overload_fraction),
            fmt_f64(m.late_service_fraction),
            opt(energy_delta),
            opt(overload_delta),
        );
        let _ = writeln!(
            summary,
            "{}: energy {} J, mean power {} W, overload {}, late {}{}",
            m.label,
            fmt_f64(m.energy_joules),
            fmt_f64(m.mean_power_w),
            fmt_f64(m.overload_fraction),
            fmt_f64(m.late_service_fraction),
            if is_baseline {
                String::new()
            } else {
                format!(
                    ", energy delta {}% (target {}%), overload delta {}% (target {}%)",
                    opt(energy_delta),
                    fmt_f64(exp.target_energy_delta_pct),
                    opt(overload_delta),
                    fmt_f64(exp.target_overload_delta_pct),
                )
            }
        );
    }
    write_output(out_dir, "compare.csv", &csv)?;
    Ok(summary)
}

/// Re-solves the steady state across the configured grid of values for one
/// matrix entry and reports π and expected power per grid point.
pub fn cmd_sweep(exp: &Experiment, out_dir: &Path) -> Result<String> {
    let Some(sweep) = &exp.sweep else {
        bail!("sweep needs a [sweep] section (row, col, values)");
    };
    let n = exp.matrix.n();

    let mut header = String::from("value");
    for i in 0..n {
        let _ = write!(header, ",pi{i}");
    }
    header.push_str(",watts\n");
    let mut csv = header;

    let mut summary = String::from("command: sweep\n");
    let _ = writeln!(summary, "entry: ({}, {})", sweep.row, sweep.col);
    let mut kept = 0usize;
    for &value in &sweep.values {
        let solved = exp
            .matrix
            .perturb_row(sweep.row, sweep.col, value)
            .and_then(|m| {
                let pi = steady_state(&m)?;
                let watts = expected_power(&pi, &exp.profile)?;
                Ok((pi, watts))
            });
        match solved {
            Ok((pi, watts)) => {
                let _ = write!(csv, "{}", fmt_f64(value));
                for &p in pi.iter() {
                    let _ = write!(csv, ",{}", fmt_f64(p));
                }
                let _ = writeln!(csv, ",{}", fmt_f64(watts));
                kept += 1;
            }
            Err(err) => {
                let _ = writeln!(summary, "value {} skipped: {err}", fmt_f64(value));
            }
        }
    }
    if kept == 0 {
        bail!("no sweep grid point was feasible");
    }
    let _ = writeln!(summary, "grid points written: {kept} of {}", sweep.values.len());
    write_output(out_dir, "sweep.csv", &csv)?;
    Ok(summary)
}

/// Runs the configured fleet under each strategy and reports per-node
/// per-state occupancy, per-node energy, and the fleet disparity.
pub fn cmd_fleet(exp: &Experiment, out_dir: &Path) -> Result<String> {
    let steps = exp.sim.steps;
    let trace = exp.workload.build(steps + 1, exp.sim.seed, &exp.base_dir)?;

    let mut csv = String::from(
        "strategy,node,state,label,occupancy,node_energy_joules,node_demand_ticks,disparity_cv\n",
    );
    let mut summary = String::from("command: fleet\n");
    let _ = writeln!(summary, "nodes: {}", exp.nodes.len());
    let _ = writeln!(summary, "workload: {}", exp.workload.label());
    let _ = writeln!(summary, "coupling: {}", exp.coupling.label());

    for &strategy in &exp.strategies {
        let report = simulate_fleet(&exp.nodes, &trace, &exp.coupling, strategy, &exp.sim)?;
        for (m, run) in report.per_node.iter().enumerate() {
            let labels = exp.nodes[m].profile.labels();
            for (s, label) in labels.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{m},{s},{label},{},{},{},{}",
                    strategy.label(),
                    fmt_f64(run.occupancy[s]),
                    fmt_f64(run.energy_joules),
                    report.per_node_demand_ticks[m],
                    fmt_f64(report.disparity_cv)
                );
            }
        }
        let total_energy: f64 = report.per_node.iter().map(|r| r.energy_joules).sum();
        let _ = writeln!(
            summary,
            "{}: total energy {} J, served {}, unserved {}, wake events {}, disparity_cv {}",
            strategy.label(),
            fmt_f64(total_energy),
            report.served_total,
            report.unserved_total,
            report.wake_events_total,
            fmt_f64(report.disparity_cv)
        );
    }

    if exp
        .nodes
        .iter()
        .all(|n| matches!(n.policy, PolicySpec::FixedMatrix { .. }))
    {
        let analytical = fleet_expected_energy(&exp.nodes)?;
        let _ = writeln!(
            summary,
            "analytical_mean_power_w: [{}]",
            analytical
                .iter()
                .map(|&w| fmt_f64(w))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    write_output(out_dir, "fleet.csv", &csv)?;
    Ok(summary)
}
