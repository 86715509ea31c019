//! Batch runs.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use super::scenario::Scenario;
use super::trace::TraceWriter;
use super::world::World;
use crate::passivity::{passivity_verdict, Verdict};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct AxisSummary {
    pub name: String,
    pub max: f64,
    pub rms: f64,
    /// Largest error over the last quarter of the run.
    pub max_settled: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub hash: String,
    pub steps: usize,
    pub final_time: f64,
    /// Deepest penetration of any probe into any obstacle (`≥ 0`).
    pub max_penetration: f64,
    pub min_probe_gap: f64,
    pub max_limit_violation: f64,
    pub max_lcp_residual: f64,
    /// Most negative contact force seen (`+∞` without contacts).
    pub min_contact_force: f64,
    /// Most negative `f·ġ` over constraints touching within the slop.
    pub min_touching_contact_power: f64,
    pub axes: Vec<AxisSummary>,
    pub beta_sq: f64,
    pub min_total_energy: f64,
    pub final_total_energy: f64,
    pub joint_dissipation: f64,
    /// Time of the first passivity violation, if any.
    pub violated_at: Option<f64>,
    /// Largest two-port power of a single step (counterexample mode).
    pub max_power: f64,
    pub mean_power: f64,
    pub mean_predicted_power: f64,
    pub wall_seconds: f64,
    pub mean_step_micros: f64,
}

/// Steps a scenario to its duration, optionally writing the trace.
pub fn run_scenario<W: Write>(
    scenario: &Scenario,
    trace: Option<&mut TraceWriter<W>>,
) -> Result<Summary> {
    let mut world = World::new(scenario)?;
    run_world(&mut world, scenario.steps(), trace)
}

pub fn run_world<W: Write>(
    world: &mut World,
    steps: usize,
    mut trace: Option<&mut TraceWriter<W>>,
) -> Result<Summary> {
    let started = Instant::now();
    let mut max_penetration = 0.0f64;
    let mut min_gap = f64::INFINITY;
    let mut max_limit = 0.0f64;
    let mut max_residual = 0.0f64;
    let mut min_force = f64::INFINITY;
    let mut min_touch = f64::INFINITY;
    let mut axis_max = vec![0.0f64; world.monitor_names().len()];
    let mut axis_sq = vec![0.0f64; axis_max.len()];
    let mut axis_settled = vec![0.0f64; axis_max.len()];
    let settle_from = steps - steps / 4;
    let (mut power, mut predicted, mut max_power) = (0.0, 0.0, f64::NEG_INFINITY);

    if let Some(w) = trace.as_deref_mut() {
        w.write(&world.record())?;
    }
    for k in 0..steps {
        let frame = world.step()?;
        if let Some(w) = trace.as_deref_mut() {
            w.write(&frame)?;
        }
        let d = world.diagnostics();
        min_gap = min_gap.min(d.min_probe_gap);
        max_penetration = max_penetration.max(-d.min_probe_gap);
        max_limit = max_limit.max(d.limit_violation);
        max_residual = max_residual.max(d.lcp_residual);
        min_force = min_force.min(d.min_contact_force);
        min_touch = min_touch.min(d.min_touching_contact_power);
        power += d.power;
        max_power = max_power.max(d.power);
        predicted += d.predicted_power;
        for (i, e) in d.axis_errors.iter().enumerate() {
            axis_max[i] = axis_max[i].max(*e);
            axis_sq[i] += e * e;
            if k >= settle_from {
                axis_settled[i] = axis_settled[i].max(*e);
            }
        }
    }
    let wall = started.elapsed().as_secs_f64();
    let ledger = world.ledger();
    let violated_at = match passivity_verdict(ledger).total {
        Verdict::Violated(t) => Some(t),
        Verdict::PassiveSoFar => None,
    };
    let n = steps.max(1) as f64;
    Ok(Summary {
        scenario: world.scenario().file.name.clone(),
        hash: world.scenario().hash.clone(),
        steps,
        final_time: world.time(),
        max_penetration,
        min_probe_gap: min_gap,
        max_limit_violation: max_limit,
        max_lcp_residual: max_residual,
        min_contact_force: min_force,
        min_touching_contact_power: min_touch,
        axes: world
            .monitor_names()
            .iter()
            .enumerate()
            .map(|(i, name)| AxisSummary {
                name: name.clone(),
                max: axis_max[i],
                rms: (axis_sq[i] / n).sqrt(),
                max_settled: axis_settled[i],
            })
            .collect(),
        beta_sq: ledger.beta_sq(),
        min_total_energy: ledger.min_total_energy(),
        final_total_energy: ledger.total_energy(),
        joint_dissipation: world.joint_dissipation(),
        violated_at,
        max_power,
        mean_power: power / n,
        mean_predicted_power: predicted / n,
        wall_seconds: wall,
        mean_step_micros: wall * 1e6 / n,
    })
}
