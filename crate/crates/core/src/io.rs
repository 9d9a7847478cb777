//! Model and plan files (JSON) and history exports (CSV).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::deployment::{DeploymentHistory, DeploymentPlan};
use crate::error::{Error, Result};
use crate::geometry::CableNetParams;
use crate::model::{Cluster, Configuration, MemberSpec, Model, SolverOptions, Topology};

pub const MODEL_SCHEMA: &str = "cts.model/1";
pub const PLAN_SCHEMA: &str = "cts.plan/1";
pub const TRAJECTORY_SCHEMA: &str = "cts.trajectory/1";
pub const TENSIONS_SCHEMA: &str = "cts.tensions/1";
pub const RESTLENGTHS_SCHEMA: &str = "cts.restlengths/1";

/// Material block of a model file. Per-member arrays and per-cluster arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Materials {
    pub density: Vec<f64>,
    pub area: Vec<f64>,
    pub modulus: Vec<f64>,
    pub cluster_area: Vec<f64>,
    pub rest_length: Vec<f64>,
    pub damping_coeff: f64,
}

/// On-disk model. Field order is the canonical serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub name: String,
    /// Generator inputs when the net came from `generate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CableNetParams>,
    pub nodes: Vec<[f64; 3]>,
    pub members: Vec<[usize; 2]>,
    pub clusters: Vec<Cluster>,
    pub boundary: Vec<usize>,
    pub materials: Materials,
    pub gravity: [f64; 3],
    /// Nodal point masses, kg.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_mass: Option<Vec<f64>>,
    /// Nodal external forces, N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_force: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub options: SolverOptions,
}

impl ModelFile {
    pub fn from_model(model: &Model) -> Self {
        let s = &model.spec;
        let force = &model.external_force;
        let has_force = force.iter().any(|f| *f != 0.0);
        let has_mass = model.point_mass.iter().any(|m| *m != 0.0);
        Self {
            schema: MODEL_SCHEMA.to_string(),
            name: model.name.clone(),
            params: model.params,
            nodes: model.config.points(),
            members: model.topology.members().iter().map(|&(i, j)| [i, j]).collect(),
            clusters: model.topology.clusters().to_vec(),
            boundary: model.topology.fixed_nodes().to_vec(),
            materials: Materials {
                density: s.density.clone(),
                area: s.area.clone(),
                modulus: s.modulus.clone(),
                cluster_area: s.cluster_area.clone(),
                rest_length: s.rest_length.clone(),
                damping_coeff: s.damping_coeff,
            },
            gravity: s.gravity,
            point_mass: has_mass.then(|| model.point_mass.clone()),
            external_force: has_force.then(|| {
                force
                    .as_slice()
                    .chunks(3)
                    .map(|c| [c[0], c[1], c[2]])
                    .collect()
            }),
            options: model.options.clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.schema != MODEL_SCHEMA {
            return Err(Error::param(
                "schema",
                format!("expected `{MODEL_SCHEMA}`, found `{}`", self.schema),
            ));
        }
        if let Some(p) = &self.params {
            p.validate()?;
        }
        let n = self.nodes.len();
        let topology = Topology::new(
            n,
            self.members.iter().map(|m| (m[0], m[1])).collect(),
            self.clusters,
            &self.boundary,
        )?;
        let spec = MemberSpec {
            density: self.materials.density,
            area: self.materials.area,
            modulus: self.materials.modulus,
            cluster_area: self.materials.cluster_area,
            rest_length: self.materials.rest_length,
            damping_coeff: self.materials.damping_coeff,
            gravity: self.gravity,
        };
        let mut model = Model::new(self.name, topology, Configuration::from_points(&self.nodes), spec)?;
        model.params = self.params;
        if let Some(m) = self.point_mass {
            model.point_mass = m;
        }
        if let Some(f) = self.external_force {
            if f.len() != n {
                return Err(Error::param(
                    "external_force",
                    format!("expected {n} entries, found {}", f.len()),
                ));
            }
            model.external_force = DVector::from_iterator(3 * n, f.into_iter().flatten());
        }
        model.options = self.options;
        model.validate()?;
        Ok(model)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::Validation(format!(
            "{what}: {e} (line {}, column {})",
            e.line(),
            e.column()
        ))
    })
}

fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn model_to_json(model: &Model) -> Result<String> {
    to_canonical_json(&ModelFile::from_model(model))
}

pub fn model_from_json(text: &str) -> Result<Model> {
    parse::<ModelFile>(text, "model file")?.into_model()
}

pub fn read_model(path: &Path) -> Result<Model> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    schema: String,
    cluster_names: Vec<String>,
    plan: DeploymentPlan,
}

pub fn plan_to_json(model: &Model, plan: &DeploymentPlan) -> Result<String> {
    to_canonical_json(&PlanFile {
        schema: PLAN_SCHEMA.to_string(),
        cluster_names: model.topology.cluster_names(),
        plan: plan.clone(),
    })
}

/// Loads a plan and checks it against the model's dimensions.
pub fn plan_from_json(model: &Model, text: &str) -> Result<DeploymentPlan> {
    let file: PlanFile = parse(text, "plan file")?;
    if file.schema != PLAN_SCHEMA {
        return Err(Error::param(
            "schema",
            format!("expected `{PLAN_SCHEMA}`, found `{}`", file.schema),
        ));
    }
    if file.cluster_names != model.topology.cluster_names() {
        return Err(Error::param("cluster_names", "plan clusters do not match the model"));
    }
    let nc = model.topology.cluster_count();
    let nd = model.topology.dof_count();
    for (k, s) in file.plan.states().enumerate() {
        let field = |f: &str| format!("plan.substeps[{k}].{f}");
        if s.rest_lengths.len() != nc || s.tensions.len() != nc || s.cluster_lengths.len() != nc {
            return Err(Error::param(field("rest_lengths"), format!("expected {nc} clusters")));
        }
        if s.coords.len() != nd {
            return Err(Error::param(field("coords"), format!("expected {nd} coordinates")));
        }
        if s.rest_lengths.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::param(field("rest_lengths"), "must be positive"));
        }
    }
    Ok(file.plan)
}

fn csv_writer<W: Write>(out: W, schema: &str, header: &[String]) -> Result<csv::Writer<W>> {
    let mut out = out;
    writeln!(out, "# {schema}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    Ok(w)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_rows<W: Write>(
    out: W,
    schema: &str,
    header: Vec<String>,
    history: &DeploymentHistory,
    row: impl Fn(&crate::deployment::HistoryRecord) -> Vec<f64>,
) -> Result<()> {
    let mut w = csv_writer(out, schema, &header)?;
    for r in &history.records {
        let mut fields = vec![r.step.to_string(), r.time.to_string()];
        fields.extend(row(r).iter().map(|v| v.to_string()));
        w.write_record(&fields).map_err(csv_error)?;
        w.flush()?;
    }
    Ok(())
}

fn leading_columns() -> Vec<String> {
    vec!["step".into(), "time_s".into()]
}

/// Node coordinates per record: `step,time_s,x0_m,y0_m,z0_m,…`.
pub fn write_trajectory_csv<W: Write>(out: W, model: &Model, history: &DeploymentHistory) -> Result<()> {
    let mut header = leading_columns();
    for i in 0..model.topology.node_count() {
        for axis in ["x", "y", "z"] {
            header.push(format!("{axis}{i}_m"));
        }
    }
    write_rows(out, TRAJECTORY_SCHEMA, header, history, |r| r.coords.clone())
}

/// Cluster tensions per record, with the free-node residual and the number
/// of feedback corrections.
pub fn write_tensions_csv<W: Write>(out: W, model: &Model, history: &DeploymentHistory) -> Result<()> {
    let mut header = leading_columns();
    header.extend(model.topology.cluster_names().iter().map(|n| format!("t_{n}_N")));
    header.push("residual_N".into());
    header.push("corrections".into());
    write_rows(out, TENSIONS_SCHEMA, header, history, |r| {
        let mut v = r.tensions.clone();
        v.push(r.residual);
        v.push(r.corrections as f64);
        v
    })
}

/// Cluster rest lengths and current lengths per record.
pub fn write_restlengths_csv<W: Write>(out: W, model: &Model, history: &DeploymentHistory) -> Result<()> {
    let names = model.topology.cluster_names();
    let mut header = leading_columns();
    header.extend(names.iter().map(|n| format!("l0_{n}_m")));
    header.extend(names.iter().map(|n| format!("l_{n}_m")));
    write_rows(out, RESTLENGTHS_SCHEMA, header, history, |r| {
        let mut v = r.rest_lengths.clone();
        v.extend(&r.cluster_lengths);
        v
    })
}

/// Writes the three history files into `dir`.
pub fn write_history(dir: &Path, model: &Model, history: &DeploymentHistory) -> Result<()> {
    fs::create_dir_all(dir)?;
    let open = |name: &str| -> Result<std::io::BufWriter<fs::File>> {
        Ok(std::io::BufWriter::new(fs::File::create(dir.join(name))?))
    };
    write_trajectory_csv(open("trajectory.csv")?, model, history)?;
    write_tensions_csv(open("tensions.csv")?, model, history)?;
    write_restlengths_csv(open("restlengths.csv")?, model, history)?;
    Ok(())
}

/// Parses `name=value` pairs such as `ODC=1e4,IDC=2e4`.
pub fn parse_assignments(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("expected name=value, found `{part}`")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("`{v}` is not a number")))?;
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}
