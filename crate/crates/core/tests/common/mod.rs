//! Shared helpers for the integration tests: random structures and
//! reference computations written independently of the library routines.

#![allow(dead_code)]

use cts_core::model::{Cluster, Configuration, MemberSpec, Model, Topology};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random taut structure with `nodes` nodes (the first two fixed) and
/// `members` members split into random clusters when `clustered`.
pub fn random_model(rng: &mut ChaCha8Rng, nodes: usize, members: usize, clustered: bool) -> Model {
    let points: Vec<[f64; 3]> = (0..nodes)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    // a spanning chain keeps every node connected, the rest are random pairs
    let mut pairs: Vec<(usize, usize)> = (1..nodes).map(|j| (rng.random_range(0..j), j)).collect();
    let members = members.min(nodes * (nodes - 1) / 2);
    while pairs.len() < members {
        let i = rng.random_range(0..nodes);
        let j = rng.random_range(0..nodes);
        if i != j && !pairs.contains(&(i, j)) && !pairs.contains(&(j, i)) {
            pairs.push((i, j));
        }
    }
    let ne = pairs.len();
    let topology = if clustered {
        let nc = rng.random_range(1..=ne);
        let mut owner: Vec<usize> = (0..ne).map(|k| if k < nc { k } else { rng.random_range(0..nc) }).collect();
        owner.rotate_left(rng.random_range(0..ne));
        let clusters = (0..nc)
            .map(|c| Cluster {
                name: format!("c{c}"),
                members: (0..ne).filter(|&k| owner[k] == c).collect(),
            })
            .collect();
        Topology::new(nodes, pairs, clusters, &[0, 1]).unwrap()
    } else {
        Topology::unclustered(nodes, pairs, &[0, 1]).unwrap()
    };
    let config = Configuration::from_points(&points);
    let nc = topology.cluster_count();
    let cluster_len: Vec<f64> = topology
        .clusters()
        .iter()
        .map(|c| {
            c.members
                .iter()
                .map(|&k| {
                    let (i, j) = topology.members()[k];
                    let (a, b) = (points[i], points[j]);
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
                })
                .sum()
        })
        .collect();
    let spec = MemberSpec {
        density: (0..ne).map(|_| rng.random_range(500.0..8000.0)).collect(),
        area: (0..ne).map(|_| rng.random_range(1e-5..1e-3)).collect(),
        modulus: (0..nc).map(|_| rng.random_range(1e9..2e11)).collect(),
        cluster_area: (0..nc).map(|_| rng.random_range(1e-5..1e-3)).collect(),
        rest_length: cluster_len.iter().map(|l| l * rng.random_range(0.95..0.999)).collect(),
        damping_coeff: rng.random_range(0.0..0.1),
        gravity: [0.0, 0.0, -9.81],
    };
    let mut model = Model::new("random", topology, config, spec).unwrap();
    model.point_mass = (0..nodes).map(|_| rng.random_range(0.0..2.0)).collect();
    model
}

/// Uniform random unit vector of length `n`.
pub fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let norm = v.norm();
    v / norm
}

fn kron_i3(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.kronecker(&DMatrix::identity(3, 3))
}

/// Matrices of an unclustered structure built directly from the
/// connectivity-matrix formulas, with no shared code with the library.
pub struct UnclusteredReference {
    pub lengths: DVector<f64>,
    pub tensions: DVector<f64>,
    pub a2: DMatrix<f64>,
    pub k_g: DMatrix<f64>,
    pub k_e: DMatrix<f64>,
    pub k_t: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub gravity: DVector<f64>,
    pub k_l0: DMatrix<f64>,
}

pub fn unclustered_reference(model: &Model, config: &Configuration) -> UnclusteredReference {
    let topo = &model.topology;
    let spec = &model.spec;
    let nn = topo.node_count();
    let ne = topo.member_count();
    let mut c = DMatrix::zeros(ne, nn);
    for (k, &(i, j)) in topo.members().iter().enumerate() {
        c[(k, i)] = -1.0;
        c[(k, j)] = 1.0;
    }
    // N is 3 × nn, H = N Cᵀ holds member vectors as columns
    let n_mat = DMatrix::from_fn(3, nn, |r, col| config.coords()[3 * col + r]);
    let h = &n_mat * c.transpose();
    let lengths = DVector::from_fn(ne, |k, _| h.column(k).norm());
    let mut bd = DMatrix::zeros(3 * ne, ne);
    for k in 0..ne {
        for r in 0..3 {
            bd[(3 * k + r, k)] = h[(r, k)];
        }
    }
    let l_inv = DMatrix::from_diagonal(&lengths.map(|l| 1.0 / l));
    let a2 = kron_i3(&c.transpose()) * &bd * &l_inv;
    // with S = I every member is its own cluster; clusters are matched to
    // members through their single entry
    let member_cluster: Vec<usize> = (0..ne).map(|k| topo.cluster_of(k)).collect();
    let ea = DVector::from_fn(ne, |k, _| {
        let cl = member_cluster[k];
        spec.modulus[cl] * spec.cluster_area[cl]
    });
    let l0 = DVector::from_fn(ne, |k, _| spec.rest_length[member_cluster[k]]);
    let tensions = DVector::from_fn(ne, |k, _| ea[k] * (lengths[k] - l0[k]) / l0[k]);
    let t_hat = DMatrix::from_diagonal(&tensions);
    let k_g = kron_i3(&(c.transpose() * &l_inv * &t_hat * &c)) - &a2 * &t_hat * &l_inv * a2.transpose();
    let ea_l0 = DMatrix::from_diagonal(&DVector::from_fn(ne, |k, _| ea[k] / l0[k]));
    let k_e = &a2 * ea_l0 * a2.transpose();
    let k_t = &k_g + &k_e;
    let masses = DVector::from_fn(ne, |k, _| spec.density[k] * spec.area[k] * l0[k]);
    let abs_c = c.abs();
    let base = abs_c.transpose() * DMatrix::from_diagonal(&masses) * &abs_c;
    let mut mass = kron_i3(&((&base + DMatrix::from_diagonal(&base.diagonal())) / 6.0));
    for (i, &pm) in model.point_mass.iter().enumerate() {
        for d in 0..3 {
            mass[(3 * i + d, 3 * i + d)] += pm;
        }
    }
    let exponent = model.options.damping_exponent;
    let dc = DVector::from_fn(ne, |k, _| {
        let cl = member_cluster[k];
        2.0 * 3f64.sqrt() / 3.0
            * spec.density[k].powf(exponent)
            * spec.cluster_area[cl]
            * spec.modulus[cl].powf(exponent)
    });
    let damping = &a2 * DMatrix::from_diagonal(&dc) * a2.transpose() * spec.damping_coeff;
    let g0 = DVector::from_column_slice(&spec.gravity);
    let mut node_mass = abs_c.transpose() * &masses * 0.5;
    for (i, &pm) in model.point_mass.iter().enumerate() {
        node_mass[i] += pm;
    }
    let gravity = node_mass.kronecker(&g0);
    // ∂t/∂l₀ = −EA·l/l₀² for t = EA(l − l₀)/l₀
    let k_l0 = -&a2 * DMatrix::from_diagonal(&DVector::from_fn(ne, |k, _| ea[k] * lengths[k] / (l0[k] * l0[k])));
    UnclusteredReference {
        lengths,
        tensions,
        a2,
        k_g,
        k_e,
        k_t,
        mass,
        damping,
        gravity,
        k_l0,
    }
}

/// Rank by Gaussian elimination with complete pivoting; pivots below
/// `rel_tol` times the largest entry count as zero.
pub fn rank_full_pivot(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = a.amax();
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    while rank < rows.min(cols) {
        let mut best = (rank, rank, 0.0f64);
        for r in rank..rows {
            for c in rank..cols {
                if a[(r, c)].abs() > best.2 {
                    best = (r, c, a[(r, c)].abs());
                }
            }
        }
        if best.2 <= rel_tol * scale {
            break;
        }
        a.swap_rows(rank, best.0);
        a.swap_columns(rank, best.1);
        let pivot = a[(rank, rank)];
        for r in rank + 1..rows {
            let f = a[(r, rank)] / pivot;
            if f != 0.0 {
                for c in rank..cols {
                    a[(r, c)] -= f * a[(rank, c)];
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}
