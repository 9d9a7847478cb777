//! Deployment trajectories, prestress redesign and open/closed-loop execution.

use log::{debug, info, warn};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, member_lengths};
use crate::dynamics::{
    default_time_step, integrate, ActuationSchedule, DynamicState, IntegrationOptions,
};
use crate::error::{Error, Result};
use crate::model::{Configuration, Model};
use crate::statics::{form_find, free_node_load, prestress_design};

/// One equilibrium state along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substep {
    pub index: usize,
    pub rest_lengths: Vec<f64>,
    pub tensions: Vec<f64>,
    pub cluster_lengths: Vec<f64>,
    pub coords: Vec<f64>,
    pub residual: f64,
}

impl Substep {
    fn from_state(
        index: usize,
        config: &Configuration,
        rest: &DVector<f64>,
        tensions: &DVector<f64>,
        cluster_lengths: &DVector<f64>,
        residual: f64,
    ) -> Self {
        Self {
            index,
            rest_lengths: rest.iter().copied().collect(),
            tensions: tensions.iter().copied().collect(),
            cluster_lengths: cluster_lengths.iter().copied().collect(),
            coords: config.coords().iter().copied().collect(),
            residual,
        }
    }

    pub fn config(&self) -> Configuration {
        Configuration::new(DVector::from_column_slice(&self.coords))
    }

    pub fn rest(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.rest_lengths)
    }

    pub fn max_tension(&self) -> f64 {
        self.tensions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Start state plus the ordered substeps of a deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub initial: Substep,
    pub substeps: Vec<Substep>,
    pub actuated: Vec<usize>,
    /// Clusters whose tension was prescribed by a redesign; empty before.
    #[serde(default)]
    pub designed: Vec<usize>,
    #[serde(default)]
    pub target_tension: Vec<f64>,
}

impl DeploymentPlan {
    /// Initial state followed by every substep.
    pub fn states(&self) -> impl Iterator<Item = &Substep> {
        std::iter::once(&self.initial).chain(&self.substeps)
    }

    pub fn len(&self) -> usize {
        self.substeps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.substeps.is_empty()
    }
}

fn equilibrium_substep(
    model: &Model,
    index: usize,
    start: &Configuration,
    rest: &DVector<f64>,
) -> Result<Substep> {
    let res = form_find(model, start, rest)?;
    let geom = member_lengths(&model.topology, &res.config)?;
    Ok(Substep::from_state(
        index,
        &res.config,
        rest,
        &res.tensions,
        &geom.cluster_lengths,
        res.residual,
    ))
}

/// Shortens each actuated cluster by its total reduction in `n_substeps`
/// equal decrements, form-finding each state from the previous one.
pub fn design_trajectory(
    model: &Model,
    start: &Configuration,
    start_rest: &DVector<f64>,
    actuated: &[usize],
    reductions: &[f64],
    n_substeps: usize,
) -> Result<DeploymentPlan> {
    let nc = model.topology.cluster_count();
    if actuated.len() != reductions.len() {
        return Err(Error::param("reductions", "one reduction per actuated cluster"));
    }
    if let Some(&c) = actuated.iter().find(|&&c| c >= nc) {
        return Err(Error::param("clusters", format!("no cluster {c}")));
    }
    if n_substeps == 0 {
        return Err(Error::param("substeps", "must be at least 1"));
    }
    if start_rest.len() != nc {
        return Err(Error::param("rest_length", format!("expected {nc} entries")));
    }
    for (&c, &d) in actuated.iter().zip(reductions) {
        if !(start_rest[c] - d > 0.0) {
            return Err(Error::param(
                "delta",
                format!("reduction {d} leaves cluster {c} without a positive rest length"),
            ));
        }
    }
    let initial = equilibrium_substep(model, 0, start, start_rest)?;
    let mut plan = DeploymentPlan {
        initial,
        substeps: Vec::with_capacity(n_substeps),
        actuated: actuated.to_vec(),
        designed: Vec::new(),
        target_tension: Vec::new(),
    };
    for k in 1..=n_substeps {
        let mut rest = start_rest.clone();
        for (&c, &d) in actuated.iter().zip(reductions) {
            rest[c] -= d * k as f64 / n_substeps as f64;
        }
        let prev = plan.substeps.last().unwrap_or(&plan.initial).config();
        match equilibrium_substep(model, k, &prev, &rest) {
            Ok(s) => {
                debug!("substep {k}: max tension {:.4e} N", s.max_tension());
                plan.substeps.push(s);
            }
            Err(e) => {
                return Err(Error::Trajectory {
                    substep: k,
                    total: n_substeps,
                    partial: Box::new(plan),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(plan)
}

/// Rest lengths that give tensions `t` at cluster lengths `l_c`:
/// l₀ = EA·l_c/(t + EA).
pub fn rest_length_for(
    tensions: &DVector<f64>,
    cluster_lengths: &DVector<f64>,
    axial_stiffness: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = tensions.len();
    if cluster_lengths.len() != n || axial_stiffness.len() != n {
        return Err(Error::param("tensions", "length mismatch"));
    }
    for c in 0..n {
        if tensions[c] <= -axial_stiffness[c] {
            return Err(Error::NonPhysicalTension {
                cluster: c,
                tension: tensions[c],
            });
        }
    }
    Ok(DVector::from_fn(n, |c, _| {
        axial_stiffness[c] * cluster_lengths[c] / (tensions[c] + axial_stiffness[c])
    }))
}

/// Prescribes the tension of the `designed` clusters at every state of the
/// plan and recomputes all rest lengths to match.
pub fn redesign_plan_prestress(
    model: &Model,
    plan: &DeploymentPlan,
    designed: &[usize],
    targets: &[f64],
) -> Result<DeploymentPlan> {
    let ea = model.spec.axial_stiffness();
    let total = plan.len();
    let mut out = DeploymentPlan {
        initial: plan.initial.clone(),
        substeps: Vec::with_capacity(total),
        actuated: plan.actuated.clone(),
        designed: designed.to_vec(),
        target_tension: targets.to_vec(),
    };
    for state in plan.states() {
        let redo = || -> Result<Substep> {
            let config = state.config();
            let w_a = free_node_load(model, &config, &state.rest())?;
            let sol = prestress_design(model, &config, &w_a, designed, targets)?;
            let lc = DVector::from_column_slice(&state.cluster_lengths);
            let rest = rest_length_for(&sol.tensions, &lc, &ea)?;
            equilibrium_substep(model, state.index, &config, &rest)
        };
        match redo() {
            Ok(s) if s.index == 0 => out.initial = s,
            Ok(s) => out.substeps.push(s),
            Err(e) => {
                return Err(Error::Trajectory {
                    substep: state.index,
                    total,
                    partial: Box::new(out),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Actuation and placement errors injected into a deployment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorModel {
    /// Multiplicative drift per cluster; missing entries mean zero.
    pub rest_length_bias: Vec<f64>,
    /// Standard deviation of the relative rest-length error drawn per substep.
    pub rest_length_noise: f64,
    /// Standard deviation of the initial free-coordinate perturbation, m.
    pub initial_offset: f64,
    pub seed: u64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            rest_length_bias: Vec::new(),
            rest_length_noise: 0.0,
            initial_offset: 0.0,
            seed: 0,
        }
    }
}

impl ErrorModel {
    pub fn is_zero(&self) -> bool {
        self.rest_length_bias.iter().all(|b| *b == 0.0)
            && self.rest_length_noise == 0.0
            && self.initial_offset == 0.0
    }

    pub fn validate(&self, clusters: usize) -> Result<()> {
        if self.rest_length_bias.len() > clusters {
            return Err(Error::param("error.bias", "more entries than clusters"));
        }
        if self.rest_length_bias.iter().any(|b| !(b.is_finite() && *b > -1.0)) {
            return Err(Error::param("error.bias", "must be finite and above -1"));
        }
        if !(self.rest_length_noise.is_finite() && self.rest_length_noise >= 0.0) {
            return Err(Error::param("error.noise", "must be >= 0"));
        }
        if !(self.initial_offset.is_finite() && self.initial_offset >= 0.0) {
            return Err(Error::param("error.offset", "must be >= 0"));
        }
        Ok(())
    }

    fn bias(&self, c: usize) -> f64 {
        self.rest_length_bias.get(c).copied().unwrap_or(0.0)
    }
}

/// Draws the actuation errors of a run in a fixed order.
struct Disturbance<'a> {
    model: &'a ErrorModel,
    rng: ChaCha8Rng,
}

impl<'a> Disturbance<'a> {
    fn new(model: &'a ErrorModel) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
        }
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn offset(&mut self, coords: &DVector<f64>) -> DVector<f64> {
        let s = self.model.initial_offset;
        let noise = DVector::from_fn(coords.len(), |_, _| self.normal());
        if s == 0.0 {
            coords.clone()
        } else {
            coords + noise * s
        }
    }

    /// Per-cluster factors (1 + bias)(1 + noise·N(0,1)) for one substep.
    fn factors(&mut self, clusters: usize) -> DVector<f64> {
        DVector::from_fn(clusters, |c, _| {
            let z = self.normal();
            (1.0 + self.model.bias(c)) * (1.0 + self.model.rest_length_noise * z)
        })
    }
}

/// How a plan is executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeployMode {
    /// A sequence of equilibria, one per substep.
    PseudoStatic,
    /// Rest lengths ramped linearly between substeps over `duration` seconds.
    Dynamic {
        duration: f64,
        dt: Option<f64>,
        record_every: usize,
    },
}

/// One row of a deployment history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub time: f64,
    pub coords: Vec<f64>,
    pub cluster_lengths: Vec<f64>,
    pub rest_lengths: Vec<f64>,
    pub tensions: Vec<f64>,
    pub residual: f64,
    /// Feedback corrections applied in this substep.
    pub corrections: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeploymentHistory {
    pub records: Vec<HistoryRecord>,
}

impl DeploymentHistory {
    pub fn last(&self) -> &HistoryRecord {
        self.records.last().expect("history is never empty")
    }
}

fn record(model: &Model, step: usize, time: f64, config: &Configuration, rest: &DVector<f64>) -> Result<HistoryRecord> {
    let sys = assemble(model, config, rest)?;
    Ok(HistoryRecord {
        step,
        time,
        coords: config.coords().iter().copied().collect(),
        cluster_lengths: sys.geometry.cluster_lengths.iter().copied().collect(),
        rest_lengths: rest.iter().copied().collect(),
        tensions: sys.tensions.iter().copied().collect(),
        residual: sys.unbalanced_force(&model.external_force).amax(),
        corrections: 0,
    })
}

/// Replays the plan's rest lengths, corrupted by `errors`, without feedback.
pub fn open_loop_deploy(
    model: &Model,
    plan: &DeploymentPlan,
    mode: DeployMode,
    errors: &ErrorModel,
) -> Result<DeploymentHistory> {
    let nc = model.topology.cluster_count();
    errors.validate(nc)?;
    let mut noise = Disturbance::new(errors);
    let start = plan.initial.config();
    let free = noise.offset(&start.free_coords(&model.topology));
    let mut config = start.with_free_coords(&model.topology, &free);
    let actual: Vec<DVector<f64>> = plan
        .states()
        .map(|s| s.rest().component_mul(&noise.factors(nc)))
        .collect();
    match mode {
        DeployMode::PseudoStatic => {
            let mut history = DeploymentHistory::default();
            for (k, rest) in actual.iter().enumerate() {
                let res = form_find(model, &config, rest)?;
                config = res.config;
                history.records.push(record(model, k, k as f64, &config, rest)?);
            }
            Ok(history)
        }
        DeployMode::Dynamic {
            duration,
            dt,
            record_every,
        } => {
            // the structure starts at rest in equilibrium with the first command
            let res = form_find(model, &config, &actual[0])?;
            let state = DynamicState::at_rest(model, &res.config);
            let schedule = ActuationSchedule::evenly_spaced(&actual, duration)?;
            let dt = match dt {
                Some(dt) => dt,
                None => default_time_step(model, &res.config, &actual[0])?,
            };
            let mut opts = IntegrationOptions::new(dt, duration);
            opts.record_every = record_every.max(1);
            let th = integrate(model, &state, &schedule, &opts)?;
            let mut history = DeploymentHistory::default();
            for s in &th.samples {
                let cfg = model.config.with_free_coords(&model.topology, &s.coords);
                history
                    .records
                    .push(record(model, s.step, s.time, &cfg, &s.rest_lengths)?);
            }
            Ok(history)
        }
    }
}

/// Number of hoop corrections allowed per substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainPolicy {
    /// A single correction per substep.
    OneShot,
    /// Repeated corrections until the tension tolerance or the cap is reached.
    Iterated { max_iterations: usize },
}

impl Default for GainPolicy {
    fn default() -> Self {
        GainPolicy::Iterated { max_iterations: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopOptions {
    pub feedback_cluster: usize,
    pub gain: GainPolicy,
    /// Tension tolerance as a fraction of the target.
    pub relative_tolerance: f64,
}

impl ClosedLoopOptions {
    pub fn new(feedback_cluster: usize) -> Self {
        Self {
            feedback_cluster,
            gain: GainPolicy::default(),
            relative_tolerance: 1e-3,
        }
    }
}

/// Replays the plan with tension feedback on one cluster: its rest length
/// is corrected by Δt / (∂t/∂l₀) using the sensitivity of the commanded
/// model state.
pub fn closed_loop_deploy(
    model: &Model,
    plan: &DeploymentPlan,
    errors: &ErrorModel,
    opts: &ClosedLoopOptions,
) -> Result<DeploymentHistory> {
    let nc = model.topology.cluster_count();
    let e1 = opts.feedback_cluster;
    if e1 >= nc {
        return Err(Error::param("feedback", format!("no cluster {e1}")));
    }
    if !(opts.relative_tolerance > 0.0) {
        return Err(Error::param("tolerance", "must be positive"));
    }
    errors.validate(nc)?;
    let cap = match opts.gain {
        GainPolicy::OneShot => 1,
        GainPolicy::Iterated { max_iterations } => max_iterations.max(1),
    };
    let mut noise = Disturbance::new(errors);
    let start = plan.initial.config();
    let free = noise.offset(&start.free_coords(&model.topology));
    let mut config = start.with_free_coords(&model.topology, &free);
    let mut model_config = start;
    let states: Vec<&Substep> = plan.states().collect();
    let factors: Vec<DVector<f64>> = states.iter().map(|_| noise.factors(nc)).collect();
    let mut history = DeploymentHistory::default();
    let mut hoop_cmd = states[0].rest_lengths[e1];
    for (k, state) in states.iter().enumerate() {
        if k > 0 {
            hoop_cmd += state.rest_lengths[e1] - states[k - 1].rest_lengths[e1];
        }
        let target = state.tensions[e1];
        let tol = opts.relative_tolerance * target.abs();
        let mut cmd = state.rest();
        let mut corrections = 0;
        let mut previous: Option<f64> = None;
        loop {
            cmd[e1] = hoop_cmd;
            let actual = cmd.component_mul(&factors[k]);
            let res = form_find(model, &config, &actual)?;
            config = res.config;
            let dt = target - res.tensions[e1];
            debug!("substep {k} correction {corrections}: dt = {dt:.3e} N");
            if dt.abs() <= tol || corrections >= cap {
                if dt.abs() > tol {
                    warn!("substep {k}: hoop tension error {dt:.3e} N after {corrections} corrections");
                }
                let mut rec = record(model, k, k as f64, &config, &actual)?;
                rec.corrections = corrections;
                history.records.push(rec);
                break;
            }
            if let Some(p) = previous {
                if p.signum() != dt.signum() && dt.abs() > p.abs() {
                    return Err(Error::FeedbackDiverging {
                        substep: k,
                        error: dt.abs(),
                    });
                }
            }
            previous = Some(dt);
            // sensitivity from the commanded (error-free) model state
            let modelled = form_find(model, &model_config, &cmd)?;
            model_config = modelled.config.clone();
            let sens = assemble(model, &modelled.config, &cmd)?.sensitivities()?;
            let s = sens.k_tc_l0c[(e1, e1)];
            if !(s.is_finite() && s.abs() > f64::EPSILON * model.spec.axial_stiffness()[e1]) {
                return Err(Error::ControlSingular {
                    cluster: e1,
                    sensitivity: s,
                });
            }
            hoop_cmd += dt / s;
            if !(hoop_cmd > 0.0) {
                return Err(Error::FeedbackDiverging {
                    substep: k,
                    error: dt.abs(),
                });
            }
            corrections += 1;
        }
    }
    info!(
        "closed loop finished: {} substeps, {} corrections",
        history.records.len(),
        history.records.iter().map(|r| r.corrections).sum::<usize>()
    );
    Ok(history)
}
