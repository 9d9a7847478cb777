//! Explicit time integration of the constrained equations of motion.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::assembly::assemble;
use crate::error::{Error, Result};
use crate::model::{Configuration, Model};
use crate::statics::modal_analysis;

/// Free-node coordinates and velocities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    pub coords: DVector<f64>,
    pub velocity: DVector<f64>,
    pub time: f64,
}

impl DynamicState {
    /// State at rest in `config`.
    pub fn at_rest(model: &Model, config: &Configuration) -> Self {
        let coords = config.free_coords(&model.topology);
        let velocity = DVector::zeros(coords.len());
        Self {
            coords,
            velocity,
            time: 0.0,
        }
    }
}

/// Piecewise-linear cluster rest lengths over time, held constant outside
/// the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationSchedule {
    times: Vec<f64>,
    rest_lengths: Vec<Vec<f64>>,
}

impl ActuationSchedule {
    pub fn new(times: Vec<f64>, rest_lengths: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != rest_lengths.len() {
            return Err(Error::param(
                "schedule",
                "needs one rest-length vector per knot and at least one knot",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("schedule.times", "must be strictly increasing"));
        }
        let n = rest_lengths[0].len();
        for (k, r) in rest_lengths.iter().enumerate() {
            if r.len() != n {
                return Err(Error::param(
                    format!("schedule.rest_lengths[{k}]"),
                    "inconsistent cluster count",
                ));
            }
            if r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::param(
                    format!("schedule.rest_lengths[{k}]"),
                    "rest lengths must be positive",
                ));
            }
        }
        Ok(Self {
            times,
            rest_lengths,
        })
    }

    pub fn constant(rest: &DVector<f64>) -> Self {
        Self {
            times: vec![0.0],
            rest_lengths: vec![rest.iter().copied().collect()],
        }
    }

    /// Evenly spaced knots over `duration` through the given states.
    pub fn evenly_spaced(states: &[DVector<f64>], duration: f64) -> Result<Self> {
        if states.len() < 2 || !(duration > 0.0) {
            return Err(Error::param(
                "schedule",
                "needs two or more states and a positive duration",
            ));
        }
        let n = states.len() - 1;
        let times = (0..=n).map(|k| duration * k as f64 / n as f64).collect();
        Self::new(times, states.iter().map(|s| s.iter().copied().collect()).collect())
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let k = self.times.partition_point(|&x| x <= t);
        let pick = |i: usize| DVector::from_column_slice(&self.rest_lengths[i]);
        if k == 0 {
            return pick(0);
        }
        if k == self.times.len() {
            return pick(k - 1);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = (t - t0) / (t1 - t0);
        pick(k - 1) * (1.0 - s) + pick(k) * s
    }
}

/// Prescribed motion of the fixed nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryMotion {
    #[default]
    Static,
    /// All fixed nodes translate together from rest with constant acceleration.
    UniformAcceleration { acceleration: [f64; 3] },
}

impl BoundaryMotion {
    fn offset(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        match *self {
            BoundaryMotion::Static => (Vector3::zeros(), Vector3::zeros(), Vector3::zeros()),
            BoundaryMotion::UniformAcceleration { acceleration } => {
                let a = Vector3::from(acceleration);
                (a * (0.5 * t * t), a * t, a)
            }
        }
    }
}

/// Full configuration with fixed nodes placed by `boundary` at time `t`.
pub fn configuration_at(
    model: &Model,
    coords: &DVector<f64>,
    boundary: &BoundaryMotion,
    t: f64,
) -> Configuration {
    let mut full = model.config.with_free_coords(&model.topology, coords);
    if *boundary != BoundaryMotion::Static {
        let (d, _, _) = boundary.offset(t);
        let mut c = full.coords().clone();
        for &n in model.topology.fixed_nodes() {
            for a in 0..3 {
                c[3 * n + a] += d[a];
            }
        }
        full = Configuration::new(c);
    }
    full
}

/// Free-node accelerations
/// M_aa⁻¹(Eₐᵀ(f_ex + g − A₂c t_c) − D_aa ṅₐ − M_ab n̈_b − D_ab ṅ_b).
pub fn dynamics_rhs(
    model: &Model,
    state: &DynamicState,
    rest_lengths: &DVector<f64>,
    boundary: &BoundaryMotion,
) -> Result<DVector<f64>> {
    let config = configuration_at(model, &state.coords, boundary, state.time);
    let sys = assemble(model, &config, rest_lengths)?;
    let mut rhs = -sys.unbalanced_force(&model.external_force);
    let (d_aa, d_ab) = sys.split(&sys.damping);
    rhs -= d_aa * &state.velocity;
    if *boundary != BoundaryMotion::Static {
        let (_, vel, acc) = boundary.offset(state.time);
        let nb = model.topology.fixed_nodes().len();
        let vb = DVector::from_fn(3 * nb, |i, _| vel[i % 3]);
        let ab = DVector::from_fn(3 * nb, |i, _| acc[i % 3]);
        let (_, m_ab) = sys.split(&sys.mass);
        rhs -= m_ab * ab + d_ab * vb;
    }
    let chol = sys.mass_aa().cholesky().ok_or(Error::SingularMass)?;
    Ok(chol.solve(&rhs))
}

/// ½ṅₐᵀM_aa ṅₐ + strain energy − (f_ex + g)ᵀn for a static boundary.
pub fn mechanical_energy(
    model: &Model,
    state: &DynamicState,
    rest_lengths: &DVector<f64>,
) -> Result<f64> {
    let config = model.config.with_free_coords(&model.topology, &state.coords);
    let sys = assemble(model, &config, rest_lengths)?;
    let kinetic = 0.5 * state.velocity.dot(&(sys.mass_aa() * &state.velocity));
    let load = &model.external_force + &sys.gravity_force;
    Ok(kinetic + sys.elastic_energy() - load.dot(config.coords()))
}

/// Step size resolving the stiffest mode: 1/(50 f_max).
pub fn default_time_step(model: &Model, config: &Configuration, rest: &DVector<f64>) -> Result<f64> {
    let n = model.topology.free_dofs().len();
    let modal = modal_analysis(model, config, rest, n)?;
    let f_max = modal.frequencies.last().copied().unwrap_or(0.0);
    if !(f_max > 0.0) {
        return Err(Error::param("dt", "cannot derive a step from a zero frequency"));
    }
    Ok(1.0 / (50.0 * f_max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Store every n-th step (the final step is always stored).
    pub record_every: usize,
    pub boundary: BoundaryMotion,
}

impl IntegrationOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            record_every: 1,
            boundary: BoundaryMotion::Static,
        }
    }
}

/// One stored integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSample {
    pub step: usize,
    pub time: f64,
    pub coords: DVector<f64>,
    pub velocity: DVector<f64>,
    pub rest_lengths: DVector<f64>,
    pub tensions: DVector<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TimeHistory {
    pub samples: Vec<TimeSample>,
}

impl TimeHistory {
    pub fn last(&self) -> &TimeSample {
        self.samples.last().expect("history holds the initial sample")
    }

    pub fn final_state(&self) -> DynamicState {
        let s = self.last();
        DynamicState {
            coords: s.coords.clone(),
            velocity: s.velocity.clone(),
            time: s.time,
        }
    }
}

fn advance(state: &DynamicState, dx: &DVector<f64>, dv: &DVector<f64>, dt: f64) -> DynamicState {
    DynamicState {
        coords: &state.coords + dx,
        velocity: &state.velocity + dv,
        time: state.time + dt,
    }
}

/// Classical RK4 step.
pub fn rk4_step(
    model: &Model,
    state: &DynamicState,
    schedule: &ActuationSchedule,
    boundary: &BoundaryMotion,
    dt: f64,
) -> Result<DynamicState> {
    let h = 0.5 * dt;
    let t = state.time;
    let a1 = dynamics_rhs(model, state, &schedule.at(t), boundary)?;
    let v1 = state.velocity.clone();
    let s2 = advance(state, &(&v1 * h), &(&a1 * h), h);
    let a2 = dynamics_rhs(model, &s2, &schedule.at(t + h), boundary)?;
    let v2 = s2.velocity.clone();
    let s3 = advance(state, &(&v2 * h), &(&a2 * h), h);
    let a3 = dynamics_rhs(model, &s3, &schedule.at(t + h), boundary)?;
    let v3 = s3.velocity.clone();
    let s4 = advance(state, &(&v3 * dt), &(&a3 * dt), dt);
    let a4 = dynamics_rhs(model, &s4, &schedule.at(t + dt), boundary)?;
    let v4 = s4.velocity;
    let w = dt / 6.0;
    let dx = (v1 + v2 * 2.0 + v3 * 2.0 + v4) * w;
    let dv = (a1 + a2 * 2.0 + a3 * 2.0 + a4) * w;
    Ok(advance(state, &dx, &dv, dt))
}

fn sample(
    model: &Model,
    step: usize,
    state: &DynamicState,
    rest: DVector<f64>,
    boundary: &BoundaryMotion,
) -> Result<TimeSample> {
    let config = configuration_at(model, &state.coords, boundary, state.time);
    let sys = assemble(model, &config, &rest)?;
    Ok(TimeSample {
        step,
        time: state.time,
        coords: state.coords.clone(),
        velocity: state.velocity.clone(),
        rest_lengths: rest,
        tensions: sys.tensions,
    })
}

/// Fixed-step RK4 from `initial` to `opts.t_end`.
pub fn integrate(
    model: &Model,
    initial: &DynamicState,
    schedule: &ActuationSchedule,
    opts: &IntegrationOptions,
) -> Result<TimeHistory> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if !(opts.t_end >= initial.time) {
        return Err(Error::param("t_end", "must not precede the initial time"));
    }
    if initial.coords.len() != model.topology.free_dofs().len()
        || initial.velocity.len() != initial.coords.len()
    {
        return Err(Error::param("initial", "state size does not match the free coordinates"));
    }
    let limit = 1e6 * model.config.bounding_diagonal().max(1.0);
    let every = opts.record_every.max(1);
    let steps = ((opts.t_end - initial.time) / opts.dt).round() as usize;
    let mut history = TimeHistory::default();
    history.samples.push(sample(
        model,
        0,
        initial,
        schedule.at(initial.time),
        &opts.boundary,
    )?);
    let mut state = initial.clone();
    for step in 1..=steps {
        state = rk4_step(model, &state, schedule, &opts.boundary, opts.dt)?;
        // keep the clock free of accumulated rounding
        state.time = initial.time + step as f64 * opts.dt;
        let norm = state.coords.amax();
        if !norm.is_finite() || norm > limit {
            return Err(Error::Instability {
                step,
                time: state.time,
            });
        }
        if step % every == 0 || step == steps {
            history.samples.push(sample(
                model,
                step,
                &state,
                schedule.at(state.time),
                &opts.boundary,
            )?);
        }
    }
    Ok(history)
}
