use proptest::prelude::*;

use starvol::field::BaseField;
use starvol::finsler::{busemann_volume, holmes_thompson_volume, legendre_dual, FinslerMetric};
use starvol::geometry::{build_grid, CotangentPoint, ManifoldModel, Resolution};

fn torus() -> ManifoldModel {
    ManifoldModel::unit_torus(2).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn momentum() -> impl Strategy<Value = Vec<f64>> {
    (0.0f64..std::f64::consts::TAU, 0.1f64..10.0).prop_map(|(t, r)| vec![r * t.cos(), r * t.sin()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn numeric_dual_matches_closed_forms(
        a in 0.3f64..3.0,
        b in 0.3f64..3.0,
        drift in (0.0f64..0.9, 0.0f64..std::f64::consts::TAU),
        p in momentum(),
    ) {
        let t = torus();
        let x = [0.3, 0.7];
        let z = CotangentPoint { base: x.to_vec(), momentum: p.clone() };
        let quad = FinslerMetric::quadratic(&t, vec![a, b]).unwrap();
        let randers = FinslerMetric::randers(&t, vec![drift.0 * drift.1.cos(), drift.0 * drift.1.sin()]).unwrap();
        for m in [quad, randers] {
            let numeric = legendre_dual(&m, &x, &p).unwrap();
            let exact = m.closed_form_dual().unwrap().eval(&z).unwrap();
            prop_assert!(rel(numeric, exact) < 1e-7, "{}: {} vs {}", m.describe(), numeric, exact);
        }
    }

    #[test]
    fn dual_is_positively_homogeneous(a in 0.3f64..3.0, t in 0.05f64..20.0, p in momentum()) {
        let m = FinslerMetric::quadratic(&torus(), vec![a, 1.0 / a]).unwrap();
        let x = [0.1, 0.2];
        let base = legendre_dual(&m, &x, &p).unwrap();
        let scaled: Vec<f64> = p.iter().map(|c| t * c).collect();
        prop_assert!(rel(legendre_dual(&m, &x, &scaled).unwrap(), t * base) < 1e-8);
    }

    #[test]
    fn larger_lagrangians_have_smaller_duals(
        a in 0.3f64..3.0,
        b in 0.3f64..3.0,
        shrink in (0.2f64..1.0, 0.2f64..1.0),
        p in momentum(),
    ) {
        let t = torus();
        let small = FinslerMetric::quadratic(&t, vec![a, b]).unwrap();
        let large = FinslerMetric::quadratic(&t, vec![a * shrink.0, b * shrink.1]).unwrap();
        let x = [0.5, 0.5];
        let (h_small, h_large) = (legendre_dual(&small, &x, &p).unwrap(), legendre_dual(&large, &x, &p).unwrap());
        prop_assert!(h_small >= h_large * (1.0 - 1e-9), "{} < {}", h_small, h_large);
    }

    #[test]
    fn double_dual_recovers_the_metric(a in 0.5f64..2.0, b in 0.5f64..2.0, v in momentum()) {
        let m = FinslerMetric::quadratic(&torus(), vec![a, b]).unwrap();
        let back = m.double_dual();
        let x = [0.25, 0.75];
        let (l, ll) = (m.eval(&x, &v).unwrap(), back.eval(&x, &v).unwrap());
        prop_assert!(rel(l, ll) < 1e-5, "{} vs {}", l, ll);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn conformal_area_is_the_integral_of_the_squared_factor(
        eps in 0.0f64..0.5,
        k in -2i32..=2,
        l in 1i32..=2,
    ) {
        let t = torus();
        let rho = format!("1 + {eps} * sin(2 * pi * ({k} * x1 + {l} * x2))");
        let m = FinslerMetric::conformal(&t, BaseField::from_expr(&t, &rho).unwrap());
        let grid = build_grid(&t, &Resolution::new(32, vec![32])).unwrap();
        let area = holmes_thompson_volume(&m, &grid).unwrap();
        prop_assert!(rel(area, 1.0 + eps * eps / 2.0) < 1e-10, "{}", area);
    }

    #[test]
    fn holmes_thompson_never_exceeds_busemann(q in 1.3f64..8.0, a in 0.5f64..2.0) {
        let t = torus();
        let grid = build_grid(&t, &Resolution::new(4, vec![256])).unwrap();
        let lq = FinslerMetric::lp_norm(&t, q).unwrap();
        let (ht, bu) = (holmes_thompson_volume(&lq, &grid).unwrap(), busemann_volume(&lq, &grid).unwrap());
        prop_assert!(ht <= bu * (1.0 + 1e-9), "l{}: {} > {}", q, ht, bu);
        let quad = FinslerMetric::quadratic(&t, vec![a, 1.0]).unwrap();
        let (ht, bu) = (holmes_thompson_volume(&quad, &grid).unwrap(), busemann_volume(&quad, &grid).unwrap());
        prop_assert!(rel(ht, bu) < 1e-6, "{} vs {}", ht, bu);
    }
}
