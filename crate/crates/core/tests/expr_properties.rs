use proptest::prelude::*;

use starvol::exprlang::{parse, Bindings, ExprError, VarSet};

fn vars() -> VarSet {
    VarSet::from_names(&["x", "y"])
}

fn bindings(x: f64, y: f64) -> Bindings {
    [("x".to_string(), x), ("y".to_string(), y)].into()
}

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.0f64..100.0).prop_map(|v| format!("{v}")),
        (1u32..1000).prop_map(|k| format!("{k}e-3")),
        Just("x".to_string()),
        Just("y".to_string()),
        Just("pi".to_string()),
    ]
}

fn expression() -> impl Strategy<Value = String> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop_oneof![Just("+"), Just("-"), Just("*"), Just("/")], inner.clone())
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            (inner.clone(), 0u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (
                prop_oneof![Just("sin"), Just("cos"), Just("abs"), Just("sqrt"), Just("log"), Just("exp")],
                inner.clone()
            )
                .prop_map(|(f, a)| format!("{f}({a})")),
            (prop_oneof![Just("min"), Just("max")], inner.clone(), inner)
                .prop_map(|(f, a, b)| format!("{f}({a}, {b})")),
        ]
    })
}

fn same_outcome(a: &Result<f64, ExprError>, b: &Result<f64, ExprError>) -> bool {
    match (a, b) {
        (Ok(u), Ok(v)) => u.to_bits() == v.to_bits(),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printing_is_a_parse_fixed_point(text in expression(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let first = parse(&text, &vars()).unwrap();
        let printed = first.to_string();
        let second = parse(&printed, &vars()).unwrap();
        prop_assert_eq!(&printed, &second.to_string());
        let b = bindings(x, y);
        prop_assert!(same_outcome(&first.eval(&b), &second.eval(&b)), "{} vs {}", text, printed);
    }

    #[test]
    fn sums_and_products_commute(a in expression(), b in expression(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let bind = bindings(x, y);
        for op in ["+", "*"] {
            let left = parse(&format!("({a}) {op} ({b})"), &vars()).unwrap().eval(&bind);
            let right = parse(&format!("({b}) {op} ({a})"), &vars()).unwrap().eval(&bind);
            prop_assert!(same_outcome(&left, &right));
        }
    }

    #[test]
    fn cubic_gradients_match_exact_derivatives(
        c in prop::collection::vec(-3.0f64..3.0, 10),
        x in -2.0f64..2.0,
        y in -2.0f64..2.0,
    ) {
        let text = format!(
            "{} + {}*x + {}*y + {}*x^2 + {}*x*y + {}*y^2 + {}*x^3 + {}*x^2*y + {}*x*y^2 + {}*y^3",
            c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8], c[9]
        );
        let e = parse(&text, &vars()).unwrap();
        let g = e.grad(&["x", "y"], &bindings(x, y), 1e-5).unwrap();
        let dx = c[1] + 2.0 * c[3] * x + c[4] * y + 3.0 * c[6] * x * x + 2.0 * c[7] * x * y + c[8] * y * y;
        let dy = c[2] + c[4] * x + 2.0 * c[5] * y + c[7] * x * x + 2.0 * c[8] * x * y + 3.0 * c[9] * y * y;
        for (num, exact) in g.iter().zip([dx, dy]) {
            prop_assert!((num - exact).abs() <= 1e-7 * exact.abs().max(1.0), "{} vs {}", num, exact);
        }
    }
}
