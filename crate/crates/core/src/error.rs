use thiserror::Error;

use crate::statics::IterationRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("member {member} is degenerate (length {length:e})")]
    DegenerateMember { member: usize, length: f64 },

    #[error("cluster `{cluster}` is in compression ({tension:e} N); cables cannot push")]
    Compression { cluster: String, tension: f64 },

    #[error("tangent stiffness on the free coordinates is singular (null-space dimension {nullity})")]
    SingularStiffness { nullity: usize },

    #[error("free-node mass matrix is not positive definite")]
    SingularMass,

    #[error("structure is unstable: {negative} negative tangent-stiffness eigenvalue(s)")]
    Unstable { negative: usize },

    #[error("form-finding did not converge after {iterations} iterations (residual {residual:e} N)")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<IterationRecord>,
    },

    #[error("designed members do not span the prestress modes ({reason})")]
    PrestressSpan { reason: String },

    #[error("infeasible prestress: cluster `{cluster}` would carry {tension:e} N")]
    InfeasiblePrestress { cluster: String, tension: f64 },

    #[error("nonphysical input: tension {tension:e} N in cluster {cluster} is at or below -EA")]
    NonPhysicalTension { cluster: usize, tension: f64 },

    #[error("trajectory failed at substep {substep} of {total}: {source}")]
    Trajectory {
        substep: usize,
        total: usize,
        partial: Box<crate::deployment::DeploymentPlan>,
        #[source]
        source: Box<Error>,
    },

    #[error("feedback sensitivity of cluster {cluster} is singular ({sensitivity:e} N/m)")]
    ControlSingular { cluster: usize, sensitivity: f64 },

    #[error("feedback correction diverging at substep {substep} (|dt| = {error:e} N)")]
    FeedbackDiverging { substep: usize, error: f64 },

    #[error("integration became unstable at step {step} (t = {time} s)")]
    Instability { step: usize, time: f64 },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::Validation(_)
            | Error::Json(_)
            | Error::NonPhysicalTension { .. }
            | Error::PrestressSpan { .. } => 2,
            Error::ControlSingular { .. } | Error::FeedbackDiverging { .. } => 4,
            Error::Trajectory { source, .. } => source.exit_code(),
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
