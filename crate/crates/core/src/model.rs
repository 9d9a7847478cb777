//! Structural data model: topology, nodal configuration, member properties.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CableNetParams;

/// A named group of members that share one continuous cable over pulleys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub name: String,
    pub members: Vec<usize>,
}

/// Node/member incidence, cluster membership and the fixed/free node split.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    members: Vec<(usize, usize)>,
    clusters: Vec<Cluster>,
    member_cluster: Vec<usize>,
    fixed: Vec<bool>,
    fixed_nodes: Vec<usize>,
    free_nodes: Vec<usize>,
}

impl Topology {
    pub fn new(
        node_count: usize,
        members: Vec<(usize, usize)>,
        clusters: Vec<Cluster>,
        fixed_nodes: &[usize],
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::param("topology.node_count", "must be positive"));
        }
        for (k, &(i, j)) in members.iter().enumerate() {
            if i >= node_count || j >= node_count {
                return Err(Error::param(
                    format!("topology.members[{k}]"),
                    format!("node index out of range (node_count = {node_count})"),
                ));
            }
            if i == j {
                return Err(Error::param(
                    format!("topology.members[{k}]"),
                    "tail and head must differ",
                ));
            }
        }
        let mut member_cluster = vec![usize::MAX; members.len()];
        for (c, cluster) in clusters.iter().enumerate() {
            if cluster.members.is_empty() {
                return Err(Error::param(
                    format!("topology.clusters[{c}]"),
                    "cluster has no members",
                ));
            }
            for &k in &cluster.members {
                if k >= members.len() {
                    return Err(Error::param(
                        format!("topology.clusters[{c}].members"),
                        format!("member index {k} out of range"),
                    ));
                }
                if member_cluster[k] != usize::MAX {
                    return Err(Error::param(
                        format!("topology.clusters[{c}].members"),
                        format!("member {k} already belongs to cluster {}", member_cluster[k]),
                    ));
                }
                member_cluster[k] = c;
            }
        }
        if let Some(k) = member_cluster.iter().position(|&c| c == usize::MAX) {
            return Err(Error::param(
                "topology.clusters",
                format!("member {k} belongs to no cluster"),
            ));
        }
        let mut fixed = vec![false; node_count];
        for &n in fixed_nodes {
            if n >= node_count {
                return Err(Error::param(
                    "topology.fixed_nodes",
                    format!("node index {n} out of range"),
                ));
            }
            if fixed[n] {
                return Err(Error::param(
                    "topology.fixed_nodes",
                    format!("node {n} listed twice"),
                ));
            }
            fixed[n] = true;
        }
        let fixed_nodes: Vec<usize> = (0..node_count).filter(|&n| fixed[n]).collect();
        let free_nodes: Vec<usize> = (0..node_count).filter(|&n| !fixed[n]).collect();
        Ok(Self {
            node_count,
            members,
            clusters,
            member_cluster,
            fixed,
            fixed_nodes,
            free_nodes,
        })
    }

    /// Every member in its own cluster (S = identity).
    pub fn unclustered(
        node_count: usize,
        members: Vec<(usize, usize)>,
        fixed_nodes: &[usize],
    ) -> Result<Self> {
        let clusters = (0..members.len())
            .map(|k| Cluster {
                name: format!("m{k}"),
                members: vec![k],
            })
            .collect();
        Self::new(node_count, members, clusters, fixed_nodes)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn dof_count(&self) -> usize {
        3 * self.node_count
    }

    pub fn members(&self) -> &[(usize, usize)] {
        &self.members
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_names(&self) -> Vec<String> {
        self.clusters.iter().map(|c| c.name.clone()).collect()
    }

    /// Cluster index of member `k`.
    pub fn cluster_of(&self, k: usize) -> usize {
        self.member_cluster[k]
    }

    pub fn cluster_index(&self, name: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.name == name)
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.fixed[node]
    }

    pub fn fixed_nodes(&self) -> &[usize] {
        &self.fixed_nodes
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    /// Indices into the stacked coordinate vector of the free nodes (Eₐ columns).
    pub fn free_dofs(&self) -> Vec<usize> {
        self.free_nodes
            .iter()
            .flat_map(|&n| [3 * n, 3 * n + 1, 3 * n + 2])
            .collect()
    }

    pub fn fixed_dofs(&self) -> Vec<usize> {
        self.fixed_nodes
            .iter()
            .flat_map(|&n| [3 * n, 3 * n + 1, 3 * n + 2])
            .collect()
    }
}

/// Stacked nodal coordinates, three entries per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    coords: DVector<f64>,
}

impl Configuration {
    pub fn new(coords: DVector<f64>) -> Self {
        assert!(coords.len().is_multiple_of(3), "coordinate vector length must be 3·n");
        Self { coords }
    }

    pub fn from_points(points: &[[f64; 3]]) -> Self {
        Self {
            coords: DVector::from_iterator(points.len() * 3, points.iter().flatten().copied()),
        }
    }

    pub fn node_count(&self) -> usize {
        self.coords.len() / 3
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn node(&self, i: usize) -> Vector3<f64> {
        Vector3::new(
            self.coords[3 * i],
            self.coords[3 * i + 1],
            self.coords[3 * i + 2],
        )
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        self.coords
            .as_slice()
            .chunks_exact(3)
            .map(|p| [p[0], p[1], p[2]])
            .collect()
    }

    pub fn free_coords(&self, topology: &Topology) -> DVector<f64> {
        let dofs = topology.free_dofs();
        DVector::from_iterator(dofs.len(), dofs.iter().map(|&d| self.coords[d]))
    }

    /// Copy of `self` with the free-node coordinates replaced; fixed nodes are untouched.
    pub fn with_free_coords(&self, topology: &Topology, free: &DVector<f64>) -> Self {
        let mut coords = self.coords.clone();
        for (v, d) in free.iter().zip(topology.free_dofs()) {
            coords[d] = *v;
        }
        Self { coords }
    }

    pub fn bounding_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.coords.as_slice().chunks_exact(3) {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
    }
}

/// Material and sizing data. Density and area are per member, the rest
/// are per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub density: Vec<f64>,
    pub area: Vec<f64>,
    pub modulus: Vec<f64>,
    pub cluster_area: Vec<f64>,
    pub rest_length: Vec<f64>,
    pub damping_coeff: f64,
    pub gravity: [f64; 3],
}

impl MemberSpec {
    /// Axial stiffness E·A of each cluster.
    pub fn axial_stiffness(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.modulus.len(),
            self.modulus.iter().zip(&self.cluster_area).map(|(e, a)| e * a),
        )
    }

    pub fn rest_lengths(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.rest_length)
    }

    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let ne = topology.member_count();
        let nc = topology.cluster_count();
        let check_len = |field: &str, v: &[f64], n: usize| {
            if v.len() != n {
                return Err(Error::param(
                    format!("materials.{field}"),
                    format!("expected {n} entries, found {}", v.len()),
                ));
            }
            Ok(())
        };
        check_len("density", &self.density, ne)?;
        check_len("area", &self.area, ne)?;
        check_len("modulus", &self.modulus, nc)?;
        check_len("cluster_area", &self.cluster_area, nc)?;
        check_len("rest_length", &self.rest_length, nc)?;
        for (field, v) in [
            ("density", &self.density),
            ("area", &self.area),
            ("modulus", &self.modulus),
            ("cluster_area", &self.cluster_area),
            ("rest_length", &self.rest_length),
        ] {
            if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::param(
                    format!("materials.{field}[{i}]"),
                    format!("must be finite and strictly positive, got {}", v[i]),
                ));
            }
        }
        if !(self.damping_coeff.is_finite() && self.damping_coeff >= 0.0) {
            return Err(Error::param("materials.damping_coeff", "must be >= 0"));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::param("gravity", "must be finite"));
        }
        Ok(())
    }
}

/// How negative cluster tensions are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensionMode {
    /// Negative tension is an error.
    #[default]
    Taut,
    /// Negative tension clamps to zero and the cluster loses its material stiffness.
    Slack,
    /// Linear in both directions; members may carry compression.
    Bilateral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tension_mode: TensionMode,
    /// Absolute force tolerance; derived from the model scale when absent.
    pub tol_force: Option<f64>,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Exponent applied to density and modulus in the critical damping term.
    pub damping_exponent: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tension_mode: TensionMode::Taut,
            tol_force: None,
            max_iter: 100,
            max_halvings: 20,
            damping_exponent: 0.5,
        }
    }
}

/// Everything needed to assemble and solve one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub params: Option<CableNetParams>,
    pub topology: Topology,
    /// Reference configuration; fixed-node coordinates are read from here.
    pub config: Configuration,
    pub spec: MemberSpec,
    /// Concentrated nodal masses (pulleys), kg.
    pub point_mass: Vec<f64>,
    /// External nodal force f_ex, N.
    pub external_force: DVector<f64>,
    pub options: SolverOptions,
}

impl Model {
    pub fn new(
        name: impl Into<String>,
        topology: Topology,
        config: Configuration,
        spec: MemberSpec,
    ) -> Result<Self> {
        let n = topology.node_count();
        let model = Self {
            name: name.into(),
            params: None,
            point_mass: vec![0.0; n],
            external_force: DVector::zeros(3 * n),
            options: SolverOptions::default(),
            topology,
            config,
            spec,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.topology.node_count();
        if self.config.node_count() != n {
            return Err(Error::param(
                "coordinates",
                format!("expected {n} nodes, found {}", self.config.node_count()),
            ));
        }
        if self.config.coords().iter().any(|x| !x.is_finite()) {
            return Err(Error::param("coordinates", "must be finite"));
        }
        self.spec.validate(&self.topology)?;
        if self.point_mass.len() != n {
            return Err(Error::param(
                "point_mass",
                format!("expected {n} entries, found {}", self.point_mass.len()),
            ));
        }
        if let Some(i) = self
            .point_mass
            .iter()
            .position(|m| !(m.is_finite() && *m >= 0.0))
        {
            return Err(Error::param(format!("point_mass[{i}]"), "must be >= 0"));
        }
        if self.external_force.len() != 3 * n {
            return Err(Error::param(
                "external_force",
                format!("expected {} entries", 3 * n),
            ));
        }
        let o = &self.options;
        if let Some(t) = o.tol_force {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::param("options.tol_force", "must be positive"));
            }
        }
        if o.max_iter == 0 {
            return Err(Error::param("options.max_iter", "must be positive"));
        }
        if !(o.damping_exponent.is_finite() && o.damping_exponent > 0.0) {
            return Err(Error::param("options.damping_exponent", "must be positive"));
        }
        Ok(())
    }

    /// Copy of the model with gravity switched off.
    pub fn without_gravity(&self) -> Self {
        let mut m = self.clone();
        m.spec.gravity = [0.0; 3];
        m
    }
}
