//! Assembly of member geometry, tensions, equilibrium/compatibility matrices,
//! stiffness, mass, damping, gravity and sensitivity matrices.
//!
//! All matrices are dense and indexed by the stacked nodal coordinate
//! vector (3 entries per node). Free/fixed partitions are taken with
//! [`partition`].

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::model::{Configuration, MemberSpec, Model, TensionMode, Topology};

/// Members shorter than this fraction of the bounding-box diagonal are degenerate.
pub const DEGENERATE_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MemberGeometry {
    /// Member lengths l.
    pub lengths: DVector<f64>,
    /// Cluster lengths l_c = S·l.
    pub cluster_lengths: DVector<f64>,
    /// Member vectors (head − tail), one column per member.
    pub directions: Matrix3xX<f64>,
}

impl MemberGeometry {
    pub fn unit(&self, k: usize) -> Vector3<f64> {
        self.directions.column(k) / self.lengths[k]
    }
}

pub fn member_lengths(topology: &Topology, config: &Configuration) -> Result<MemberGeometry> {
    let ne = topology.member_count();
    let threshold = DEGENERATE_LENGTH * config.bounding_diagonal();
    let mut lengths = DVector::zeros(ne);
    let mut cluster_lengths = DVector::zeros(topology.cluster_count());
    let mut directions = Matrix3xX::zeros(ne);
    for (k, &(i, j)) in topology.members().iter().enumerate() {
        let h = config.node(j) - config.node(i);
        let l = h.norm();
        if !(l > threshold) {
            return Err(Error::DegenerateMember {
                member: k,
                length: l,
            });
        }
        lengths[k] = l;
        cluster_lengths[topology.cluster_of(k)] += l;
        directions.set_column(k, &h);
    }
    Ok(MemberGeometry {
        lengths,
        cluster_lengths,
        directions,
    })
}

/// Linear-elastic cluster tensions t = EA (l_c − l₀)/l₀.
pub fn cluster_tensions(
    topology: &Topology,
    cluster_lengths: &DVector<f64>,
    rest_lengths: &DVector<f64>,
    axial_stiffness: &DVector<f64>,
    mode: TensionMode,
) -> Result<DVector<f64>> {
    let mut t = DVector::zeros(cluster_lengths.len());
    for i in 0..t.len() {
        let ti = axial_stiffness[i] * (cluster_lengths[i] - rest_lengths[i]) / rest_lengths[i];
        t[i] = match mode {
            TensionMode::Slack => ti.max(0.0),
            TensionMode::Taut if ti < 0.0 => {
                return Err(Error::Compression {
                    cluster: topology.clusters()[i].name.clone(),
                    tension: ti,
                })
            }
            TensionMode::Taut | TensionMode::Bilateral => ti,
        };
    }
    Ok(t)
}

/// E·A per cluster, zeroed for slack clusters in slack mode.
pub fn effective_axial_stiffness(
    cluster_lengths: &DVector<f64>,
    rest_lengths: &DVector<f64>,
    axial_stiffness: &DVector<f64>,
    mode: TensionMode,
) -> DVector<f64> {
    DVector::from_fn(axial_stiffness.len(), |i, _| match mode {
        TensionMode::Slack if cluster_lengths[i] < rest_lengths[i] => 0.0,
        _ => axial_stiffness[i],
    })
}

/// Equilibrium matrix A₂c (3n × n_ec): column c holds the nodal forces
/// produced by unit tension in cluster c.
pub fn equilibrium_matrix(topology: &Topology, geom: &MemberGeometry) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(topology.dof_count(), topology.cluster_count());
    for (k, &(i, j)) in topology.members().iter().enumerate() {
        let c = topology.cluster_of(k);
        let u = geom.unit(k);
        for d in 0..3 {
            a[(3 * i + d, c)] -= u[d];
            a[(3 * j + d, c)] += u[d];
        }
    }
    a
}

/// Unclustered equilibrium matrix A₂ (3n × n_e).
pub fn member_equilibrium_matrix(topology: &Topology, geom: &MemberGeometry) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(topology.dof_count(), topology.member_count());
    for (k, &(i, j)) in topology.members().iter().enumerate() {
        let u = geom.unit(k);
        for d in 0..3 {
            a[(3 * i + d, k)] = -u[d];
            a[(3 * j + d, k)] = u[d];
        }
    }
    a
}

/// Compatibility matrix B_lc with B_lc·dn = dl_c. Always the exact transpose
/// of [`equilibrium_matrix`].
pub fn compatibility_matrix(topology: &Topology, geom: &MemberGeometry) -> DMatrix<f64> {
    equilibrium_matrix(topology, geom).transpose()
}

/// Ā₂c = Eₐᵀ A₂c: rows of the free coordinates only.
pub fn constrained_equilibrium_matrix(topology: &Topology, a2c: &DMatrix<f64>) -> DMatrix<f64> {
    a2c.select_rows(&topology.free_dofs())
}

/// Sub-block of `m` with the given row and column dof sets.
pub fn partition(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    m.select_rows(rows).select_columns(cols)
}

fn add_block(m: &mut DMatrix<f64>, i: usize, j: usize, block: &Matrix3<f64>) {
    for r in 0..3 {
        for c in 0..3 {
            m[(3 * i + r, 3 * j + c)] += block[(r, c)];
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stiffness {
    /// Force-density stiffness K with K·n = A₂c·t_c.
    pub k: DMatrix<f64>,
    pub k_g: DMatrix<f64>,
    pub k_e: DMatrix<f64>,
    pub k_t: DMatrix<f64>,
}

/// `effective_ea` and `rest_lengths` are per cluster.
pub fn stiffness_matrices(
    topology: &Topology,
    geom: &MemberGeometry,
    a2c: &DMatrix<f64>,
    tensions: &DVector<f64>,
    effective_ea: &DVector<f64>,
    rest_lengths: &DVector<f64>,
) -> Stiffness {
    let n = topology.dof_count();
    let mut k = DMatrix::zeros(n, n);
    let mut k_g = DMatrix::zeros(n, n);
    for (m, &(i, j)) in topology.members().iter().enumerate() {
        let q = tensions[topology.cluster_of(m)] / geom.lengths[m];
        let u = geom.unit(m);
        let fd = Matrix3::identity() * q;
        let geo = (Matrix3::identity() - u * u.transpose()) * q;
        add_block(&mut k, i, i, &fd);
        add_block(&mut k, j, j, &fd);
        add_block(&mut k, i, j, &-fd);
        add_block(&mut k, j, i, &-fd);
        add_block(&mut k_g, i, i, &geo);
        add_block(&mut k_g, j, j, &geo);
        add_block(&mut k_g, i, j, &-geo);
        add_block(&mut k_g, j, i, &-geo);
    }
    let stiff = DVector::from_fn(effective_ea.len(), |c, _| effective_ea[c] / rest_lengths[c]);
    let k_e = weighted_gram(a2c, &stiff);
    let k_t = &k_g + &k_e;
    Stiffness { k, k_g, k_e, k_t }
}

/// A·diag(w)·Aᵀ, symmetrised.
fn weighted_gram(a: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (c, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[c];
    }
    let g = &scaled * a.transpose();
    (&g + g.transpose()) * 0.5
}

/// Per-member rest lengths: each cluster's rest length is split in
/// proportion to current member lengths (uniform strain along a cluster).
pub fn member_rest_lengths(
    topology: &Topology,
    geom: &MemberGeometry,
    rest_lengths: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(topology.member_count(), |k, _| {
        let c = topology.cluster_of(k);
        geom.lengths[k] * rest_lengths[c] / geom.cluster_lengths[c]
    })
}

/// m = ρ̂ Â l₀.
pub fn member_masses(spec: &MemberSpec, member_rest: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(member_rest.len(), |k, _| {
        spec.density[k] * spec.area[k] * member_rest[k]
    })
}

/// Consistent bar mass plus nodal point masses.
pub fn mass_matrix(
    topology: &Topology,
    member_masses: &DVector<f64>,
    point_mass: &[f64],
) -> DMatrix<f64> {
    let n = topology.dof_count();
    let mut m = DMatrix::zeros(n, n);
    for (k, &(i, j)) in topology.members().iter().enumerate() {
        let mk = member_masses[k];
        for d in 0..3 {
            m[(3 * i + d, 3 * i + d)] += mk / 3.0;
            m[(3 * j + d, 3 * j + d)] += mk / 3.0;
            m[(3 * i + d, 3 * j + d)] += mk / 6.0;
            m[(3 * j + d, 3 * i + d)] += mk / 6.0;
        }
    }
    for (i, &pm) in point_mass.iter().enumerate() {
        for d in 0..3 {
            m[(3 * i + d, 3 * i + d)] += pm;
        }
    }
    m
}

/// Critical damping coefficient per cluster, (2√3/3)·ρ_c^e·A_c·E_c^e.
pub fn critical_damping(topology: &Topology, spec: &MemberSpec, exponent: f64) -> DVector<f64> {
    DVector::from_fn(topology.cluster_count(), |c, _| {
        let members = &topology.clusters()[c].members;
        let rho = members.iter().map(|&k| spec.density[k]).sum::<f64>() / members.len() as f64;
        2.0 * 3f64.sqrt() / 3.0
            * rho.powf(exponent)
            * spec.cluster_area[c]
            * spec.modulus[c].powf(exponent)
    })
}

/// D = ξ A₂c d̂_c A₂cᵀ.
pub fn damping_matrix(
    topology: &Topology,
    a2c: &DMatrix<f64>,
    spec: &MemberSpec,
    exponent: f64,
) -> DMatrix<f64> {
    let d = critical_damping(topology, spec, exponent) * spec.damping_coeff;
    weighted_gram(a2c, &d)
}

/// Nodal weights: half of each member to each end, plus point masses.
/// Points along `g0`, so it enters the load as `w = f_ex + g`.
pub fn gravity_vector(
    topology: &Topology,
    member_masses: &DVector<f64>,
    point_mass: &[f64],
    g0: [f64; 3],
) -> DVector<f64> {
    let mut node_mass = point_mass.to_vec();
    for (k, &(i, j)) in topology.members().iter().enumerate() {
        node_mass[i] += 0.5 * member_masses[k];
        node_mass[j] += 0.5 * member_masses[k];
    }
    DVector::from_fn(topology.dof_count(), |r, _| node_mass[r / 3] * g0[r % 3])
}

/// Number of eigenvalues of a symmetric matrix that are numerically zero.
pub fn nullity(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.amax();
    eig.eigenvalues
        .iter()
        .filter(|l| l.abs() <= 1e-12 * max.max(f64::MIN_POSITIVE))
        .count()
}

#[derive(Debug, Clone)]
pub struct Sensitivities {
    /// ∂(K n)/∂l₀c, 3n × n_ec.
    pub k_l0c: DMatrix<f64>,
    /// dnₐ/dl₀c, nₐ × n_ec.
    pub k_na_l0c: DMatrix<f64>,
    /// dnₐ/dw, nₐ × 3n.
    pub k_na_w: DMatrix<f64>,
    /// dt_c/dl₀c, n_ec × n_ec.
    pub k_tc_l0c: DMatrix<f64>,
    /// dt_c/dw, n_ec × 3n.
    pub k_tc_w: DMatrix<f64>,
}

/// Everything assembled at one configuration and rest-length vector.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub geometry: MemberGeometry,
    pub rest_lengths: DVector<f64>,
    pub tensions: DVector<f64>,
    pub effective_ea: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub stiffness: Stiffness,
    pub member_rest_lengths: DVector<f64>,
    pub member_masses: DVector<f64>,
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub gravity_force: DVector<f64>,
    free_dofs: Vec<usize>,
    fixed_dofs: Vec<usize>,
}

pub fn assemble(
    model: &Model,
    config: &Configuration,
    rest_lengths: &DVector<f64>,
) -> Result<AssembledSystem> {
    let topo = &model.topology;
    let spec = &model.spec;
    let mode = model.options.tension_mode;
    let geometry = member_lengths(topo, config)?;
    let ea = spec.axial_stiffness();
    let tensions = cluster_tensions(topo, &geometry.cluster_lengths, rest_lengths, &ea, mode)?;
    let effective_ea = effective_axial_stiffness(&geometry.cluster_lengths, rest_lengths, &ea, mode);
    let eq_matrix = equilibrium_matrix(topo, &geometry);
    let stiffness = stiffness_matrices(
        topo,
        &geometry,
        &eq_matrix,
        &tensions,
        &effective_ea,
        rest_lengths,
    );
    let member_rest = member_rest_lengths(topo, &geometry, rest_lengths);
    let masses = member_masses(spec, &member_rest);
    let mass = mass_matrix(topo, &masses, &model.point_mass);
    let damping = damping_matrix(topo, &eq_matrix, spec, model.options.damping_exponent);
    let gravity_force = gravity_vector(topo, &masses, &model.point_mass, spec.gravity);
    Ok(AssembledSystem {
        geometry,
        rest_lengths: rest_lengths.clone(),
        tensions,
        effective_ea,
        eq_matrix,
        stiffness,
        member_rest_lengths: member_rest,
        member_masses: masses,
        mass,
        damping,
        gravity_force,
        free_dofs: topo.free_dofs(),
        fixed_dofs: topo.fixed_dofs(),
    })
}

impl AssembledSystem {
    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn compat_matrix(&self) -> DMatrix<f64> {
        self.eq_matrix.transpose()
    }

    pub fn constrained_eq_matrix(&self) -> DMatrix<f64> {
        self.eq_matrix.select_rows(&self.free_dofs)
    }

    /// (aa, ab) blocks of a 3n × 3n matrix.
    pub fn split(&self, m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows = m.select_rows(&self.free_dofs);
        (
            rows.select_columns(&self.free_dofs),
            rows.select_columns(&self.fixed_dofs),
        )
    }

    pub fn k_t_aa(&self) -> DMatrix<f64> {
        partition(&self.stiffness.k_t, &self.free_dofs, &self.free_dofs)
    }

    pub fn mass_aa(&self) -> DMatrix<f64> {
        partition(&self.mass, &self.free_dofs, &self.free_dofs)
    }

    /// Internal nodal force A₂c·t_c.
    pub fn internal_force(&self) -> DVector<f64> {
        &self.eq_matrix * &self.tensions
    }

    /// Free-node unbalanced force Eₐᵀ(A₂c t_c − f_ex − g).
    pub fn unbalanced_force(&self, external: &DVector<f64>) -> DVector<f64> {
        let r = self.internal_force() - external - &self.gravity_force;
        DVector::from_iterator(self.free_dofs.len(), self.free_dofs.iter().map(|&d| r[d]))
    }

    /// Total strain energy Σ ½ EA (l_c − l₀)²/l₀.
    pub fn elastic_energy(&self) -> f64 {
        (0..self.tensions.len())
            .map(|c| {
                let stretch = self.geometry.cluster_lengths[c] - self.rest_lengths[c];
                0.5 * self.effective_ea[c] * stretch * stretch / self.rest_lengths[c]
            })
            .sum()
    }

    pub fn sensitivities(&self) -> Result<Sensitivities> {
        let k_taa = self.k_t_aa();
        let nul = nullity(&k_taa);
        if nul > 0 {
            return Err(Error::SingularStiffness { nullity: nul });
        }
        let lu = k_taa.lu();
        let nc = self.tensions.len();
        let n = self.eq_matrix.nrows();
        let na = self.free_dofs.len();
        let l0 = &self.rest_lengths;
        let lc = &self.geometry.cluster_lengths;
        let ea = &self.effective_ea;

        let mut k_l0c = self.eq_matrix.clone();
        for (c, mut col) in k_l0c.column_iter_mut().enumerate() {
            col *= -ea[c] * lc[c] / (l0[c] * l0[c]);
        }
        let rhs = k_l0c.select_rows(&self.free_dofs);
        let k_na_l0c = -lu
            .solve(&rhs)
            .ok_or(Error::SingularStiffness { nullity: 1 })?;

        let mut selector = DMatrix::zeros(na, n);
        for (r, &d) in self.free_dofs.iter().enumerate() {
            selector[(r, d)] = 1.0;
        }
        let k_na_w = lu
            .solve(&selector)
            .ok_or(Error::SingularStiffness { nullity: 1 })?;

        let a_bar_t = self.constrained_eq_matrix().transpose();
        let mut k_tc_l0c = &a_bar_t * &k_na_l0c;
        for c in 0..nc {
            k_tc_l0c[(c, c)] -= lc[c] / l0[c];
        }
        let mut k_tc_w = &a_bar_t * &k_na_w;
        for c in 0..nc {
            let s = ea[c] / l0[c];
            k_tc_l0c.row_mut(c).scale_mut(s);
            k_tc_w.row_mut(c).scale_mut(s);
        }
        Ok(Sensitivities {
            k_l0c,
            k_na_l0c,
            k_na_w,
            k_tc_l0c,
            k_tc_w,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Cluster;

    fn spec_for(topo: &Topology, ea: f64, rest: Vec<f64>) -> MemberSpec {
        MemberSpec {
            density: vec![1000.0; topo.member_count()],
            area: vec![1e-4; topo.member_count()],
            modulus: vec![ea / 1e-4; topo.cluster_count()],
            cluster_area: vec![1e-4; topo.cluster_count()],
            rest_length: rest,
            damping_coeff: 0.0,
            gravity: [0.0, 0.0, -9.81],
        }
    }

    #[test]
    fn single_member_geometry() {
        let topo = Topology::unclustered(2, vec![(0, 1)], &[0]).unwrap();
        let cfg = Configuration::from_points(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let g = member_lengths(&topo, &cfg).unwrap();
        assert_eq!(g.lengths[0], 1.0);
        assert_eq!(g.directions.column(0).as_slice(), &[1.0, 0.0, 0.0]);
        let a = equilibrium_matrix(&topo, &g);
        assert_eq!(a.column(0).as_slice(), &[-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = compatibility_matrix(&topo, &g);
        assert_eq!(b.row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn clustered_lengths_sum() {
        let topo = Topology::new(
            3,
            vec![(0, 1), (1, 2)],
            vec![Cluster {
                name: "c".into(),
                members: vec![0, 1],
            }],
            &[0, 2],
        )
        .unwrap();
        let cfg = Configuration::from_points(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let g = member_lengths(&topo, &cfg).unwrap();
        assert_eq!(g.cluster_lengths.as_slice(), &[2.0]);
    }

    #[test]
    fn triangle_hoop_chords() {
        let pts: Vec<[f64; 3]> = (0..3)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect();
        let topo = Topology::new(
            3,
            vec![(0, 1), (1, 2), (2, 0)],
            vec![Cluster {
                name: "hoop".into(),
                members: vec![0, 1, 2],
            }],
            &[],
        )
        .unwrap();
        let g = member_lengths(&topo, &Configuration::from_points(&pts)).unwrap();
        let chord = 2.0 * (std::f64::consts::PI / 3.0).sin();
        for k in 0..3 {
            assert!((g.lengths[k] - chord).abs() < 1e-14);
        }
        assert!((g.cluster_lengths[0] - 3.0 * 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn degenerate_member_rejected() {
        let topo = Topology::unclustered(3, vec![(0, 1), (1, 2)], &[0]).unwrap();
        let cfg = Configuration::from_points(&[[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(matches!(
            member_lengths(&topo, &cfg),
            Err(Error::DegenerateMember { member: 1, .. })
        ));
    }

    #[test]
    fn tension_examples() {
        let topo = Topology::unclustered(2, vec![(0, 1)], &[0]).unwrap();
        let ea = DVector::from_element(1, 3000.0);
        let rest = DVector::from_element(1, 1.0);
        let t = cluster_tensions(&topo, &DVector::from_element(1, 1.0), &rest, &ea, TensionMode::Taut)
            .unwrap();
        assert_eq!(t[0], 0.0);
        let t = cluster_tensions(&topo, &DVector::from_element(1, 1.01), &rest, &ea, TensionMode::Taut)
            .unwrap();
        assert!((t[0] - 30.0).abs() < 1e-9);
        let short = DVector::from_element(1, 0.99);
        assert!(matches!(
            cluster_tensions(&topo, &short, &rest, &ea, TensionMode::Taut),
            Err(Error::Compression { .. })
        ));
        let t = cluster_tensions(&topo, &short, &rest, &ea, TensionMode::Slack).unwrap();
        assert_eq!(t[0], 0.0);
        let eff = effective_axial_stiffness(&short, &rest, &ea, TensionMode::Slack);
        assert_eq!(eff[0], 0.0);
    }

    #[test]
    fn pulley_node_force_along_bisector() {
        let topo = Topology::new(
            3,
            vec![(0, 1), (1, 2)],
            vec![Cluster {
                name: "c".into(),
                members: vec![0, 1],
            }],
            &[0, 2],
        )
        .unwrap();
        let cfg = Configuration::from_points(&[[0.0; 3], [1.0, 0.0, -1.0], [2.0, 0.0, 0.0]]);
        let g = member_lengths(&topo, &cfg).unwrap();
        let a = equilibrium_matrix(&topo, &g);
        let t = 5.0;
        let f = a.column(0) * t;
        // u₁ points from node 1 to node 0, u₂ from node 1 to node 2; the cable
        // pulls the pulley along both, the equilibrium matrix reports the reaction
        let u1 = (cfg.node(0) - cfg.node(1)).normalize();
        let u2 = (cfg.node(2) - cfg.node(1)).normalize();
        let expected = -(u1 + u2) * t;
        for d in 0..3 {
            assert!((f[3 + d] - expected[d]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_cable_lateral_geometric_stiffness() {
        let topo = Topology::unclustered(2, vec![(0, 1)], &[0]).unwrap();
        let l = 2.0;
        let cfg = Configuration::from_points(&[[0.0; 3], [l, 0.0, 0.0]]);
        let g = member_lengths(&topo, &cfg).unwrap();
        let a = equilibrium_matrix(&topo, &g);
        let t = DVector::from_element(1, 7.0);
        let ea = DVector::from_element(1, 100.0);
        let rest = DVector::from_element(1, 1.9);
        let s = stiffness_matrices(&topo, &g, &a, &t, &ea, &rest);
        assert!((s.k_t[(4, 4)] - 7.0 / l).abs() < 1e-14);
        assert!((s.k_t[(5, 5)] - 7.0 / l).abs() < 1e-14);
        assert!((s.k_t[(3, 3)] - 100.0 / 1.9).abs() < 1e-12);
        // zero prestress leaves only the material part
        let s0 = stiffness_matrices(&topo, &g, &a, &DVector::zeros(1), &ea, &rest);
        assert_eq!(s0.k_g.amax(), 0.0);
        assert_eq!(s0.k_t, s0.k_e);
    }

    #[test]
    fn consistent_bar_mass() {
        let topo = Topology::unclustered(2, vec![(0, 1)], &[0]).unwrap();
        let m = mass_matrix(&topo, &DVector::from_element(1, 6.0), &[0.0, 0.0]);
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(0, 3)], 1.0);
        assert_eq!(m[(3, 0)], 1.0);
        assert_eq!(m[(5, 5)], 2.0);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn gravity_split_evenly() {
        let topo = Topology::unclustered(2, vec![(0, 1)], &[0]).unwrap();
        let g = gravity_vector(&topo, &DVector::from_element(1, 2.0), &[0.0, 0.0], [0.0, 0.0, -9.81]);
        assert_eq!(g.as_slice(), &[0.0, 0.0, -9.81, 0.0, 0.0, -9.81]);
        let g = gravity_vector(&topo, &DVector::from_element(1, 2.0), &[0.0, 0.0], [0.0; 3]);
        assert_eq!(g.amax(), 0.0);
    }

    fn random_net() -> (Model, Configuration) {
        // five nodes, two of them fixed, one clustered pair
        let pts = [
            [0.0, 0.0, 0.0],
            [3.0, 0.2, 0.1],
            [1.1, 1.3, -0.4],
            [2.0, -0.9, 0.3],
            [1.4, 0.1, 1.2],
        ];
        let members = vec![(0, 2), (2, 1), (0, 3), (3, 1), (2, 4), (3, 4), (4, 1)];
        let clusters = vec![
            Cluster { name: "a".into(), members: vec![0, 1] },
            Cluster { name: "b".into(), members: vec![2, 3] },
            Cluster { name: "c".into(), members: vec![4] },
            Cluster { name: "d".into(), members: vec![5, 6] },
        ];
        let topo = Topology::new(5, members, clusters, &[0, 1]).unwrap();
        let cfg = Configuration::from_points(&pts);
        let g = member_lengths(&topo, &cfg).unwrap();
        let rest = g.cluster_lengths.map(|l| l * 0.97);
        let spec = spec_for(&topo, 500.0, rest.as_slice().to_vec());
        let mut model = Model::new("net", topo, cfg.clone(), spec).unwrap();
        model.point_mass = vec![0.0, 0.0, 0.1, 0.2, 0.3];
        model.spec.damping_coeff = 0.05;
        (model, cfg)
    }

    #[test]
    fn compatibility_matches_finite_differences() {
        let (model, cfg) = random_net();
        let topo = &model.topology;
        let g = member_lengths(topo, &cfg).unwrap();
        let b = compatibility_matrix(topo, &g);
        let eps = 1e-7;
        for dof in 0..topo.dof_count() {
            let mut plus = cfg.coords().clone();
            let mut minus = cfg.coords().clone();
            plus[dof] += eps;
            minus[dof] -= eps;
            let lp = member_lengths(topo, &Configuration::new(plus)).unwrap().cluster_lengths;
            let lm = member_lengths(topo, &Configuration::new(minus)).unwrap().cluster_lengths;
            let fd = (lp - lm) / (2.0 * eps);
            for c in 0..topo.cluster_count() {
                assert!((fd[c] - b[(c, dof)]).abs() < 1e-7, "dof {dof} cluster {c}");
            }
        }
    }

    #[test]
    fn tangent_stiffness_matches_finite_differences() {
        let (model, cfg) = random_net();
        let rest = model.spec.rest_lengths();
        let sys = assemble(&model, &cfg, &rest).unwrap();
        let force = |c: &DVector<f64>| {
            assemble(&model, &Configuration::new(c.clone()), &rest)
                .unwrap()
                .internal_force()
        };
        let eps = 1e-6;
        for dof in 0..model.topology.dof_count() {
            let mut plus = cfg.coords().clone();
            let mut minus = cfg.coords().clone();
            plus[dof] += eps;
            minus[dof] -= eps;
            let fd = (force(&plus) - force(&minus)) / (2.0 * eps);
            let col = sys.stiffness.k_t.column(dof);
            let err = (&fd - col).norm() / col.norm();
            assert!(err < 1e-7, "dof {dof}: rel err {err}");
        }
    }

    #[test]
    fn force_density_stiffness_reproduces_internal_force() {
        let (model, cfg) = random_net();
        let sys = assemble(&model, &cfg, &model.spec.rest_lengths()).unwrap();
        let kn = &sys.stiffness.k * cfg.coords();
        let f = sys.internal_force();
        assert!((kn - f).amax() < 1e-10);
    }

    #[test]
    fn mass_totals_and_symmetry() {
        let (model, cfg) = random_net();
        let sys = assemble(&model, &cfg, &model.spec.rest_lengths()).unwrap();
        let total: f64 = sys.member_masses.sum() + model.point_mass.iter().sum::<f64>();
        for axis in 0..3 {
            let idx: Vec<usize> = (0..5).map(|n| 3 * n + axis).collect();
            let block = partition(&sys.mass, &idx, &idx);
            assert!((block.sum() - total).abs() < 1e-12 * total);
        }
        assert_eq!(sys.mass, sys.mass.transpose());
        let gz: f64 = (0..5).map(|n| sys.gravity_force[3 * n + 2]).sum();
        assert!((gz + 9.81 * total).abs() < 1e-12 * total);
        // cluster masses are preserved by the proportional split
        let topo = &model.topology;
        for (c, cl) in topo.clusters().iter().enumerate() {
            let m: f64 = cl.members.iter().map(|&k| sys.member_masses[k]).sum();
            let expect = 1000.0 * 1e-4 * model.spec.rest_length[c];
            assert!((m - expect).abs() < 1e-14 * expect.max(1.0));
        }
    }

    #[test]
    fn damping_properties() {
        let (mut model, cfg) = random_net();
        let sys = assemble(&model, &cfg, &model.spec.rest_lengths()).unwrap();
        let d = &sys.damping;
        assert_eq!(*d, d.transpose());
        let eig = SymmetricEigen::new(d.clone());
        assert!(eig.eigenvalues.min() > -1e-12 * d.amax());
        let translation = DVector::from_fn(15, |r, _| [0.3, -1.2, 0.7][r % 3]);
        assert!((d * translation).amax() < 1e-12 * d.amax());
        model.spec.damping_coeff = 0.0;
        let sys = assemble(&model, &cfg, &model.spec.rest_lengths()).unwrap();
        assert_eq!(sys.damping.amax(), 0.0);
    }

    #[test]
    fn rigid_translations_unloaded_without_prestress() {
        let (model, cfg) = random_net();
        let g = member_lengths(&model.topology, &cfg).unwrap();
        let a = equilibrium_matrix(&model.topology, &g);
        let ea = model.spec.axial_stiffness();
        let s = stiffness_matrices(
            &model.topology,
            &g,
            &a,
            &DVector::zeros(4),
            &ea,
            &model.spec.rest_lengths(),
        );
        for axis in 0..3 {
            let v = DVector::from_fn(15, |r, _| if r % 3 == axis { 1.0 } else { 0.0 });
            assert!((&s.k_t * v).amax() < 1e-12 * s.k_t.amax());
        }
    }
}
