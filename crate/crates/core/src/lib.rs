//! Statics, dynamics and deployment control of clustered tensegrity cable nets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod deployment;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod model;
pub mod scenario;
pub mod statics;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{build_topology, AngleSpacing, CableNetParams};
pub use model::{Cluster, Configuration, MemberSpec, Model, SolverOptions, TensionMode, Topology};
