//! Structural invariants of the assembled matrices on random clustered nets.

mod common;

use cts_core::assembly::{assemble, compatibility_matrix, member_lengths};
use nalgebra::DVector;
use proptest::prelude::*;

use common::{random_direction, random_model, rng};

fn symmetric_rel(m: &nalgebra::DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax() / m.amax().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assembled_matrices_are_symmetric(seed in any::<u64>(), nodes in 3usize..8, extra in 0usize..6) {
        let mut r = rng(seed);
        let model = random_model(&mut r, nodes, nodes + extra, true);
        let sys = assemble(&model, &model.config, &model.spec.rest_lengths()).unwrap();
        prop_assert!(symmetric_rel(&sys.stiffness.k_t) < 1e-12);
        prop_assert!(symmetric_rel(&sys.stiffness.k_e) < 1e-12);
        prop_assert!(symmetric_rel(&sys.stiffness.k_g) < 1e-12);
        prop_assert!(symmetric_rel(&sys.mass) < 1e-12);
        prop_assert!(symmetric_rel(&sys.damping) < 1e-12);
    }

    #[test]
    fn material_stiffness_and_mass_are_nonnegative(seed in any::<u64>(), nodes in 3usize..8) {
        let mut r = rng(seed);
        let model = random_model(&mut r, nodes, nodes + 2, true);
        let sys = assemble(&model, &model.config, &model.spec.rest_lengths()).unwrap();
        let ke = sys.stiffness.k_e.clone().symmetric_eigenvalues();
        prop_assert!(ke.min() >= -1e-9 * ke.amax());
        let m = sys.mass.clone().symmetric_eigenvalues();
        prop_assert!(m.min() > 0.0);
    }

    #[test]
    fn rigid_translation_leaves_lengths_and_forces(seed in any::<u64>(), nodes in 3usize..8) {
        let mut r = rng(seed);
        let model = random_model(&mut r, nodes, nodes + 3, true);
        let shift = random_direction(&mut r, 3);
        let moved = cts_core::Configuration::new(DVector::from_fn(3 * nodes, |i, _| {
            model.config.coords()[i] + shift[i % 3]
        }));
        let rest = model.spec.rest_lengths();
        let a = assemble(&model, &model.config, &rest).unwrap();
        let b = assemble(&model, &moved, &rest).unwrap();
        let scale = a.tensions.amax();
        prop_assert!((&a.tensions - &b.tensions).amax() <= 1e-9 * scale);
        prop_assert!((a.internal_force() - b.internal_force()).amax() <= 1e-9 * scale);
        // translations lie in the null space of the compatibility matrix
        let geom = member_lengths(&model.topology, &model.config).unwrap();
        let t = DVector::from_fn(3 * nodes, |i, _| shift[i % 3]);
        prop_assert!((compatibility_matrix(&model.topology, &geom) * t).amax() < 1e-12);
    }

    #[test]
    fn internal_force_is_self_balanced(seed in any::<u64>(), nodes in 3usize..8) {
        let mut r = rng(seed);
        let model = random_model(&mut r, nodes, nodes + 2, true);
        let sys = assemble(&model, &model.config, &model.spec.rest_lengths()).unwrap();
        let f = sys.internal_force();
        for d in 0..3 {
            let sum: f64 = (0..nodes).map(|i| f[3 * i + d]).sum();
            prop_assert!(sum.abs() <= 1e-9 * sys.tensions.amax());
        }
    }

    #[test]
    fn total_mass_is_member_plus_point_mass(seed in any::<u64>(), nodes in 3usize..8) {
        let mut r = rng(seed);
        let model = random_model(&mut r, nodes, nodes + 2, true);
        let sys = assemble(&model, &model.config, &model.spec.rest_lengths()).unwrap();
        let total = sys.member_masses.sum() + model.point_mass.iter().sum::<f64>();
        let x_block: f64 = (0..nodes)
            .flat_map(|i| (0..nodes).map(move |j| (i, j)))
            .map(|(i, j)| sys.mass[(3 * i, 3 * j)])
            .sum();
        prop_assert!((x_block - total).abs() <= 1e-12 * total);
    }
}
