//! A complete, serializable description of one deployment run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deployment::{
    closed_loop_deploy, design_trajectory, open_loop_deploy, redesign_plan_prestress,
    ClosedLoopOptions, DeployMode, DeploymentHistory, DeploymentPlan, ErrorModel, GainPolicy,
};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    #[default]
    Open,
    Closed,
}

/// Error injection with cluster names instead of indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorSpec {
    pub bias: BTreeMap<String, f64>,
    pub noise: f64,
    pub offset: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeployConfig {
    pub substeps: usize,
    pub clusters: Vec<String>,
    /// Total rest-length reduction per actuated cluster, m.
    pub delta: Vec<f64>,
    /// Designed cluster tensions applied to every state of the plan, N.
    #[serde(default)]
    pub redesign: BTreeMap<String, f64>,
    #[serde(default)]
    pub mode: ControlMode,
    #[serde(default = "default_feedback")]
    pub feedback: String,
    #[serde(default)]
    pub gain: GainPolicy,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Ramp duration for a dynamic run, s; pseudo-static when absent.
    #[serde(default)]
    pub dynamics: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub error: ErrorSpec,
}

fn default_feedback() -> String {
    "HC".into()
}

fn default_tolerance() -> f64 {
    1e-3
}

fn default_record_every() -> usize {
    1
}

impl DeployConfig {
    pub fn new(substeps: usize, clusters: Vec<String>, delta: Vec<f64>) -> Self {
        Self {
            substeps,
            clusters,
            delta,
            redesign: BTreeMap::new(),
            mode: ControlMode::Open,
            feedback: default_feedback(),
            gain: GainPolicy::default(),
            tolerance: default_tolerance(),
            dynamics: None,
            dt: None,
            record_every: default_record_every(),
            error: ErrorSpec::default(),
        }
    }

    fn cluster(model: &Model, name: &str, field: &str) -> Result<usize> {
        model.topology.cluster_index(name).ok_or_else(|| {
            Error::param(
                field,
                format!(
                    "unknown cluster `{name}` (model has {})",
                    model.topology.cluster_names().join(", ")
                ),
            )
        })
    }

    pub fn error_model(&self, model: &Model) -> Result<ErrorModel> {
        let mut bias = vec![0.0; model.topology.cluster_count()];
        for (name, b) in &self.error.bias {
            bias[Self::cluster(model, name, "error.bias")?] = *b;
        }
        Ok(ErrorModel {
            rest_length_bias: bias,
            rest_length_noise: self.error.noise,
            initial_offset: self.error.offset,
            seed: self.error.seed,
        })
    }

    pub fn plan(&self, model: &Model) -> Result<DeploymentPlan> {
        let actuated = self
            .clusters
            .iter()
            .map(|n| Self::cluster(model, n, "clusters"))
            .collect::<Result<Vec<_>>>()?;
        let delta = match self.delta.len() {
            1 => vec![self.delta[0]; actuated.len()],
            n if n == actuated.len() => self.delta.clone(),
            _ => return Err(Error::param("delta", "give one value or one per cluster")),
        };
        let plan = design_trajectory(
            model,
            &model.config,
            &model.spec.rest_lengths(),
            &actuated,
            &delta,
            self.substeps,
        )?;
        if self.redesign.is_empty() {
            return Ok(plan);
        }
        let mut designed = Vec::new();
        let mut targets = Vec::new();
        for (name, t) in &self.redesign {
            designed.push(Self::cluster(model, name, "redesign")?);
            targets.push(*t);
        }
        redesign_plan_prestress(model, &plan, &designed, &targets)
    }

    /// Executes the plan under the configured control mode.
    pub fn execute(&self, model: &Model, plan: &DeploymentPlan) -> Result<DeploymentHistory> {
        let errors = self.error_model(model)?;
        match self.mode {
            ControlMode::Open => {
                let mode = match self.dynamics {
                    Some(duration) => DeployMode::Dynamic {
                        duration,
                        dt: self.dt,
                        record_every: self.record_every,
                    },
                    None => DeployMode::PseudoStatic,
                };
                open_loop_deploy(model, plan, mode, &errors)
            }
            ControlMode::Closed => {
                if self.dynamics.is_some() {
                    return Err(Error::param(
                        "dynamics",
                        "closed-loop control runs pseudo-statically",
                    ));
                }
                let opts = ClosedLoopOptions {
                    feedback_cluster: Self::cluster(model, &self.feedback, "feedback")?,
                    gain: self.gain,
                    relative_tolerance: self.tolerance,
                };
                closed_loop_deploy(model, plan, &errors, &opts)
            }
        }
    }
}
