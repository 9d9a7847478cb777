//! Model generation from net parameters and the two shipped fixtures.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::member_lengths;
use crate::deployment::{design_trajectory, rest_length_for, DeploymentPlan};
use crate::error::{Error, Result};
use crate::geometry::{build_topology, AngleSpacing, CableNetParams};
use crate::model::{MemberSpec, Model, SolverOptions};
use crate::statics::form_find;

pub const STANDARD_GRAVITY: f64 = 9.81;

/// How initial cluster rest lengths are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestLengthRule {
    /// Rest lengths giving this tension at the generated geometry, N.
    InitialTension(f64),
    /// Explicit per-cluster rest lengths, m.
    Explicit(Vec<f64>),
}

/// Inputs of `generate`: net shape plus uniform material data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub name: String,
    pub params: CableNetParams,
    /// Young's modulus, Pa.
    pub modulus: f64,
    /// Cable cross-section, m².
    pub area: f64,
    /// kg/m³.
    pub density: f64,
    pub rest_length: RestLengthRule,
    /// Weight of the pulley at each free node, N.
    #[serde(default)]
    pub free_pulley_weight: f64,
    /// Weight of the pulley at each fixed node, N.
    #[serde(default)]
    pub fixed_pulley_weight: f64,
    #[serde(default)]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub damping_coeff: f64,
    #[serde(default)]
    pub options: SolverOptions,
}

pub fn generate(spec: &GenerateSpec) -> Result<Model> {
    spec.params.validate()?;
    for (field, v) in [
        ("modulus", spec.modulus),
        ("area", spec.area),
        ("density", spec.density),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(field, "must be finite and strictly positive"));
        }
    }
    for (field, v) in [
        ("free_pulley_weight", spec.free_pulley_weight),
        ("fixed_pulley_weight", spec.fixed_pulley_weight),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::param(field, "must be >= 0"));
        }
    }
    let (topo, config) = build_topology(&spec.params)?;
    let ne = topo.member_count();
    let nc = topo.cluster_count();
    let geom = member_lengths(&topo, &config)?;
    let ea = DVector::from_element(nc, spec.modulus * spec.area);
    let rest_length = match &spec.rest_length {
        RestLengthRule::InitialTension(t) => {
            rest_length_for(&DVector::from_element(nc, *t), &geom.cluster_lengths, &ea)?
                .iter()
                .copied()
                .collect()
        }
        RestLengthRule::Explicit(v) => v.clone(),
    };
    let member_spec = MemberSpec {
        density: vec![spec.density; ne],
        area: vec![spec.area; ne],
        modulus: vec![spec.modulus; nc],
        cluster_area: vec![spec.area; nc],
        rest_length,
        damping_coeff: spec.damping_coeff,
        gravity: spec.gravity,
    };
    let weight_to_mass = |w: f64| w / STANDARD_GRAVITY;
    let point_mass = (0..topo.node_count())
        .map(|i| {
            if topo.is_fixed(i) {
                weight_to_mass(spec.fixed_pulley_weight)
            } else {
                weight_to_mass(spec.free_pulley_weight)
            }
        })
        .collect();
    let mut model = Model::new(spec.name.clone(), topo, config, member_spec)?;
    model.params = Some(spec.params);
    model.point_mass = point_mass;
    model.options = spec.options.clone();
    model.validate()?;
    Ok(model)
}

/// Large steel net with the three-cluster layout and the published rest
/// lengths of its undeployed state. Weightless, so prestress design is
/// feasible. The span is chosen so those rest lengths sit close to the
/// generated shape with modest prestress.
pub fn saddle_paper_spec() -> GenerateSpec {
    GenerateSpec {
        name: "saddle-paper".into(),
        params: CableNetParams {
            p: 20,
            q: 2,
            rx: 56.6,
            ry: 56.6,
            a: 60.0,
            b: 60.0,
            c: 0.293,
            angle_spacing: AngleSpacing::Parametric,
            skew: 2,
        },
        modulus: 1.6e11,
        area: 1e-4,
        density: 7870.0,
        rest_length: RestLengthRule::Explicit(vec![866.27, 799.30, 103.60]),
        free_pulley_weight: 0.0,
        fixed_pulley_weight: 0.0,
        gravity: [0.0; 3],
        damping_coeff: 0.02,
        options: SolverOptions::default(),
    }
}

/// Desk-scale nylon net: 1.05 m square footprint, 0.5 m high, 150 mm hoop.
pub fn saddle_lab_spec() -> GenerateSpec {
    let radius = 0.525;
    let diameter = 0.6e-3;
    let area = std::f64::consts::PI * diameter * diameter / 4.0;
    GenerateSpec {
        name: "saddle-lab".into(),
        params: CableNetParams {
            p: 12,
            q: 1,
            rx: radius,
            ry: radius,
            a: 1.05,
            b: 1.05,
            c: 0.15 / radius,
            angle_spacing: AngleSpacing::Parametric,
            skew: 1,
        },
        modulus: 3000.0 / area,
        area,
        density: 1150.0,
        rest_length: RestLengthRule::InitialTension(60.0),
        free_pulley_weight: 1.6,
        fixed_pulley_weight: 0.5,
        gravity: [0.0, 0.0, -STANDARD_GRAVITY],
        damping_coeff: 0.02,
        options: SolverOptions::default(),
    }
}

/// Replaces the reference configuration by the equilibrium of the model's
/// rest lengths, form-found from the current configuration.
pub fn settle(model: &mut Model) -> Result<()> {
    model.config = form_find(model, &model.config, &model.spec.rest_lengths())?.config;
    Ok(())
}

fn settled(spec: &GenerateSpec) -> Model {
    let mut model = generate(spec).expect("shipped fixture is valid");
    settle(&mut model).expect("shipped fixture settles");
    model
}

/// Paper fixture in equilibrium with its published rest lengths.
pub fn saddle_paper() -> Model {
    settled(&saddle_paper_spec())
}

/// Lab fixture in equilibrium under its own weight.
pub fn saddle_lab() -> Model {
    settled(&saddle_lab_spec())
}

/// Reduction of each cluster over the paper deployment: 700 m on both
/// diagonal clusters.
pub const PAPER_REDUCTION: f64 = 700.0;

/// Paper deployment: both diagonal clusters shortened by 700 m, hoop held.
pub fn paper_plan(model: &Model, substeps: usize) -> Result<DeploymentPlan> {
    let odc = model.topology.cluster_index("ODC").ok_or(Error::param("clusters", "no ODC"))?;
    let idc = model.topology.cluster_index("IDC").ok_or(Error::param("clusters", "no IDC"))?;
    design_trajectory(
        model,
        &model.config,
        &model.spec.rest_lengths(),
        &[odc, idc],
        &[PAPER_REDUCTION, PAPER_REDUCTION],
        substeps,
    )
}

/// Lab deployment: the diagonal cluster is reeled in while the hoop is
/// paid out, opening the hoop from 150 mm to roughly 280 mm.
pub const LAB_REDUCTIONS: [f64; 2] = [1.55, -0.84];

pub fn lab_plan(model: &Model, substeps: usize) -> Result<DeploymentPlan> {
    let dc = model.topology.cluster_index("DC").ok_or(Error::param("clusters", "no DC"))?;
    let hc = model.topology.cluster_index("HC").ok_or(Error::param("clusters", "no HC"))?;
    design_trajectory(
        model,
        &model.config,
        &model.spec.rest_lengths(),
        &[dc, hc],
        &LAB_REDUCTIONS,
        substeps,
    )
}
