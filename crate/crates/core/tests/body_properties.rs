use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use starvol::dualvol::{
    check_dual_bm, check_dual_minkowski, check_main_inequality, check_polynomial_expansion, dmv_value,
    relative_quadrature_error, suite_tolerance, volume,
};
use starvol::geometry::{build_grid, CosphereGrid, ManifoldModel, Resolution};
use starvol::starbody::{
    body_from_hamiltonian, dilate, intersection, radial_sum, random_star_hamiltonian, union, StarBody,
};

fn torus_grid() -> Arc<CosphereGrid> {
    build_grid(&ManifoldModel::unit_torus(2).unwrap(), &Resolution::new(12, vec![24])).unwrap()
}

fn t3_grid() -> Arc<CosphereGrid> {
    build_grid(&ManifoldModel::unit_torus(3).unwrap(), &Resolution::new(4, vec![8, 6])).unwrap()
}

fn sphere_grid() -> Arc<CosphereGrid> {
    build_grid(&ManifoldModel::round_sphere(), &Resolution::new(2, vec![24])).unwrap()
}

fn random_bodies(grid: &Arc<CosphereGrid>, seed: u64, count: usize, amplitude: f64) -> Vec<StarBody> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| body_from_hamiltonian(&random_star_hamiltonian(grid.model(), amplitude, &mut rng), grid).unwrap())
        .collect()
}

fn max_gap(a: &StarBody, b: &StarBody) -> f64 {
    a.rho()
        .iter()
        .zip(b.rho())
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lattice_laws_hold_at_every_node(seed in any::<u64>()) {
        let g = torus_grid();
        let b = random_bodies(&g, seed, 3, 0.4);
        let (x, y, z) = (&b[0], &b[1], &b[2]);
        prop_assert_eq!(max_gap(&union(x, y).unwrap(), &union(y, x).unwrap()), 0.0);
        prop_assert_eq!(max_gap(&intersection(x, y).unwrap(), &intersection(y, x).unwrap()), 0.0);
        prop_assert_eq!(
            max_gap(&union(&union(x, y).unwrap(), z).unwrap(), &union(x, &union(y, z).unwrap()).unwrap()),
            0.0
        );
        prop_assert_eq!(
            max_gap(
                &intersection(&intersection(x, y).unwrap(), z).unwrap(),
                &intersection(x, &intersection(y, z).unwrap()).unwrap()
            ),
            0.0
        );
        prop_assert_eq!(max_gap(&union(x, x).unwrap(), x), 0.0);
        prop_assert_eq!(max_gap(&intersection(x, x).unwrap(), x), 0.0);
    }

    #[test]
    fn radial_sum_is_a_commutative_monoid_action(seed in any::<u64>(), lambda in 0.2f64..5.0) {
        let g = torus_grid();
        let b = random_bodies(&g, seed, 3, 0.4);
        let (x, y, z) = (&b[0], &b[1], &b[2]);
        prop_assert!(max_gap(&radial_sum(x, y).unwrap(), &radial_sum(y, x).unwrap()) < 1e-14);
        let left = radial_sum(&radial_sum(x, y).unwrap(), z).unwrap();
        let right = radial_sum(x, &radial_sum(y, z).unwrap()).unwrap();
        prop_assert!(max_gap(&left, &right) < 1e-14);
        let distributed = radial_sum(&dilate(x, lambda).unwrap(), &dilate(y, lambda).unwrap()).unwrap();
        let outer = dilate(&radial_sum(x, y).unwrap(), lambda).unwrap();
        prop_assert!(max_gap(&distributed, &outer) < 1e-13);
    }

    #[test]
    fn dual_mixed_volume_is_symmetric_and_positive(seed in any::<u64>()) {
        let g = t3_grid();
        let b = random_bodies(&g, seed, 3, 0.5);
        let v = dmv_value(&[&b[0], &b[1], &b[2]]).unwrap();
        prop_assert!(v > 0.0);
        for perm in [[1, 0, 2], [2, 1, 0], [0, 2, 1], [1, 2, 0], [2, 0, 1]] {
            let w = dmv_value(&[&b[perm[0]], &b[perm[1]], &b[perm[2]]]).unwrap();
            prop_assert!(rel(v, w) < 1e-14, "{} vs {}", v, w);
        }
        for body in &b {
            prop_assert!(volume(body) > 0.0);
        }
    }

    #[test]
    fn polynomial_expansion_holds_for_random_weights(
        seed in any::<u64>(),
        lambda in 0.1f64..4.0,
        mu in 0.0f64..4.0,
    ) {
        for g in [torus_grid(), t3_grid(), sphere_grid()] {
            let b = random_bodies(&g, seed, 2, 0.4);
            let v = check_polynomial_expansion(&b[0], &b[1], lambda, mu, 1e-12).unwrap();
            prop_assert!(v.holds, "{:?}", v);
        }
    }

    #[test]
    fn dilation_scales_volume_and_mixed_volume(seed in any::<u64>(), lambda in 0.1f64..10.0) {
        let g = t3_grid();
        let b = random_bodies(&g, seed, 3, 0.4);
        let scaled = dilate(&b[0], lambda).unwrap();
        prop_assert!(rel(volume(&scaled), lambda.powi(3) * volume(&b[0])) < 1e-13);
        let v = dmv_value(&[&b[0], &b[1], &b[2]]).unwrap();
        let w = dmv_value(&[&scaled, &b[1], &b[2]]).unwrap();
        prop_assert!(rel(w, lambda * v) < 1e-13);
    }

    #[test]
    fn dual_inequalities_hold_on_random_bodies(seed in any::<u64>(), amplitude in 0.05f64..0.8) {
        for g in [torus_grid(), sphere_grid()] {
            let b = random_bodies(&g, seed, 2, amplitude);
            let (x, y) = (&b[0], &b[1]);
            let tol = suite_tolerance(relative_quadrature_error(&[x, y], |bs| dmv_value(&[bs[0], bs[1]])), 3.0);
            prop_assert!(check_main_inequality(&[x, y], tol).unwrap().holds);
            for v in check_dual_minkowski(x, y, tol).unwrap() {
                prop_assert!(v.holds, "{:?}", v);
            }
            prop_assert!(check_dual_bm(x, y, tol).unwrap().holds);
        }
    }

    #[test]
    fn union_and_intersection_bracket_both_bodies(seed in any::<u64>()) {
        let g = torus_grid();
        let b = random_bodies(&g, seed, 2, 0.5);
        let (lo, hi) = (intersection(&b[0], &b[1]).unwrap(), union(&b[0], &b[1]).unwrap());
        for body in &b {
            prop_assert!(volume(&lo) <= volume(body) && volume(body) <= volume(&hi));
        }
    }
}

#[test]
fn model_hamiltonian_gives_the_unit_body() {
    for g in [torus_grid(), sphere_grid()] {
        let h = starvol::starbody::StarHamiltonian::model_norm(g.model());
        let body = body_from_hamiltonian(&h, &g).unwrap();
        assert!(body.rho().iter().all(|r| (r - 1.0).abs() < 1e-14));
    }
}
