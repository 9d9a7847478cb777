//! Batches of independent deployment runs: seed sweeps and duration ladders.

use nalgebra::DVector;

use crate::deployment::{
    closed_loop_deploy, open_loop_deploy, ClosedLoopOptions, DeployMode, DeploymentHistory,
    DeploymentPlan, ErrorModel,
};
use crate::dynamics::ActuationSchedule;
use crate::error::Result;
use crate::exec::Execution;
use crate::model::{Configuration, Model};
use crate::statics::form_find;

/// Terminal errors of one paired open/closed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlComparison {
    pub seed: u64,
    pub open_tension_error: f64,
    pub closed_tension_error: f64,
    pub open_coord_error: f64,
    pub closed_coord_error: f64,
}

fn terminal_errors(
    model: &Model,
    plan: &DeploymentPlan,
    history: &DeploymentHistory,
    cluster: usize,
) -> (f64, f64) {
    let target = plan.substeps.last().unwrap_or(&plan.initial);
    let last = history.last();
    let dt = (last.tensions[cluster] - target.tensions[cluster]).abs();
    let dx = model
        .topology
        .free_dofs()
        .iter()
        .map(|&d| (last.coords[d] - target.coords[d]).abs())
        .fold(0.0, f64::max);
    (dt, dx)
}

/// Runs open and closed loop on the same error draw for every seed.
pub fn compare_control(
    model: &Model,
    plan: &DeploymentPlan,
    errors: &ErrorModel,
    control: &ClosedLoopOptions,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<ControlComparison>> {
    let cluster = control.feedback_cluster;
    exec.map(seeds, |&seed| {
        let e = ErrorModel {
            seed,
            ..errors.clone()
        };
        let open = open_loop_deploy(model, plan, DeployMode::PseudoStatic, &e)?;
        let closed = closed_loop_deploy(model, plan, &e, control)?;
        let (ot, ox) = terminal_errors(model, plan, &open, cluster);
        let (ct, cx) = terminal_errors(model, plan, &closed, cluster);
        Ok(ControlComparison {
            seed,
            open_tension_error: ot,
            closed_tension_error: ct,
            open_coord_error: ox,
            closed_coord_error: cx,
        })
    })
    .into_iter()
    .collect()
}

/// Cluster tensions of the equilibrium sequence through `schedule`,
/// evaluated at the given times and warm-started from `start`.
pub fn pseudo_static_curve(
    model: &Model,
    start: &Configuration,
    schedule: &ActuationSchedule,
    times: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let mut config = start.clone();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let res = form_find(model, &config, &schedule.at(t))?;
        config = res.config;
        out.push(res.tensions);
    }
    Ok(out)
}

/// Dynamic-versus-static tension deviation of one deployment duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderPoint {
    pub duration: f64,
    /// sup |t_dyn − t_static| / sup |t_static| over time and clusters.
    pub relative_deviation: f64,
    pub steps: usize,
}

/// Deploys the plan dynamically for each duration and compares the tension
/// history against the equilibrium curve at the same normalized times.
pub fn duration_ladder(
    model: &Model,
    plan: &DeploymentPlan,
    durations: &[f64],
    dt: f64,
    samples: usize,
    exec: Execution,
) -> Result<Vec<LadderPoint>> {
    let rests: Vec<DVector<f64>> = plan.states().map(|s| s.rest()).collect();
    exec.map(durations, |&duration| {
        let steps = (duration / dt).round() as usize;
        let record_every = (steps / samples.max(1)).max(1);
        let mode = DeployMode::Dynamic {
            duration,
            dt: Some(dt),
            record_every,
        };
        let history = open_loop_deploy(model, plan, mode, &ErrorModel::default())?;
        let schedule = ActuationSchedule::evenly_spaced(&rests, duration)?;
        let times: Vec<f64> = history.records.iter().map(|r| r.time).collect();
        let statics = pseudo_static_curve(model, &plan.initial.config(), &schedule, &times)?;
        let mut dev = 0.0f64;
        let mut scale = 0.0f64;
        for (r, s) in history.records.iter().zip(&statics) {
            for c in 0..s.len() {
                dev = dev.max((r.tensions[c] - s[c]).abs());
                scale = scale.max(s[c].abs());
            }
        }
        Ok(LadderPoint {
            duration,
            relative_deviation: dev / scale,
            steps,
        })
    })
    .into_iter()
    .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
