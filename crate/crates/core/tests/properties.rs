use std::collections::BTreeMap;

use proptest::prelude::*;

use kahler_conformal::diff::{expand, partial_derivative};
use kahler_conformal::dsl::{parse_expression, Expr};
use kahler_conformal::levi_civita::{curvature_bundle, kahler_residuals};
use kahler_conformal::models::{sample_points, space_form, warped_type9};
use kahler_conformal::tensor::metric_frame;

fn coords() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

fn parse(text: &str) -> Expr {
    parse_expression(text, &coords(), &BTreeMap::new()).unwrap()
}

/// Smooth expressions in `x, y` that are finite on `[-1, 1]²`.
fn smooth_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        (-2.0f64..2.0).prop_map(|c| format!("({c:.3})")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (2 + ({b})^2))")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(tanh({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("ln(3 + sin({a}))")),
            inner.prop_map(|a| format!("(-{a})^3")),
        ]
    })
}

fn unit_point() -> impl Strategy<Value = [f64; 2]> {
    [-0.9f64..0.9, -0.9f64..0.9]
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parsing_never_panics(text in "\\PC{0,40}") {
        if let Ok(e) = parse_expression(&text, &coords(), &BTreeMap::new()) {
            let _ = e.evaluate(&[0.3, -0.2]);
        }
    }

    #[test]
    fn parsing_grammar_soup_never_panics(text in "[xy0-9.+\\-*/^() ,a-z]{0,30}") {
        if let Ok(e) = parse_expression(&text, &coords(), &BTreeMap::new()) {
            let _ = e.evaluate(&[0.3, -0.2]);
            let _ = expand(&e, &[0.3, -0.2], 3);
        }
    }

    #[test]
    fn display_round_trips(text in smooth_expr(), p in unit_point()) {
        let e = parse(&text);
        let again = parse(&e.to_string());
        prop_assert_eq!(e.to_sexpr(), again.to_sexpr());
        prop_assert_eq!(e.evaluate(&p).unwrap().to_bits(), again.evaluate(&p).unwrap().to_bits());
    }

    #[test]
    fn jet_value_is_the_evaluation(text in smooth_expr(), p in unit_point()) {
        let e = parse(&text);
        let t = expand(&e, &p, 4).unwrap();
        prop_assert!(close(t.value(), e.evaluate(&p).unwrap(), 1e-13));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partials_match_central_differences(text in smooth_expr(), p in unit_point()) {
        let e = parse(&text);
        let f = |x: f64, y: f64| e.evaluate(&[x, y]).unwrap();
        let h = 1e-4;
        let (x, y) = (p[0], p[1]);
        let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        let fxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
        let fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
        let scale = f(x, y).abs().max(1.0);
        prop_assert!(close(partial_derivative(&e, &[1, 0], &p).unwrap(), fx, 1e-5 * scale));
        prop_assert!(close(partial_derivative(&e, &[0, 1], &p).unwrap(), fy, 1e-5 * scale));
        prop_assert!(close(partial_derivative(&e, &[2, 0], &p).unwrap(), fxx, 1e-3 * scale));
        prop_assert!(close(partial_derivative(&e, &[1, 1], &p).unwrap(), fxy, 1e-3 * scale));
    }

    #[test]
    fn mixed_partials_commute_through_differences(text in smooth_expr(), p in unit_point()) {
        let e = parse(&text);
        let h = 1e-5;
        let dx = |x: f64, y: f64| partial_derivative(&e, &[1, 0], &[x, y]).unwrap();
        let dy = |x: f64, y: f64| partial_derivative(&e, &[0, 1], &[x, y]).unwrap();
        let yx = (dx(p[0], p[1] + h) - dx(p[0], p[1] - h)) / (2.0 * h);
        let xy = (dy(p[0] + h, p[1]) - dy(p[0] - h, p[1])) / (2.0 * h);
        let exact = partial_derivative(&e, &[1, 1], &p).unwrap();
        let scale = exact.abs().max(1.0);
        prop_assert!((yx - xy).abs() < 1e-5 * scale);
        prop_assert!((yx - exact).abs() < 1e-5 * scale);
    }

    #[test]
    fn differentiation_is_linear(
        f in smooth_expr(),
        g in smooth_expr(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        p in unit_point(),
        alpha in prop::sample::select(vec![[1u8, 0], [0, 1], [2, 0], [1, 1], [0, 3], [2, 2]]),
    ) {
        let combined = parse(&format!("({a:.6})*({f}) + ({b:.6})*({g})"));
        let (a, b) = (format!("{a:.6}").parse::<f64>().unwrap(), format!("{b:.6}").parse::<f64>().unwrap());
        let lhs = partial_derivative(&combined, &alpha, &p).unwrap();
        let rhs = a * partial_derivative(&parse(&f), &alpha, &p).unwrap()
            + b * partial_derivative(&parse(&g), &alpha, &p).unwrap();
        prop_assert!(close(lhs, rhs, 1e-10));
    }

    #[test]
    fn product_and_quotient_rules(f in smooth_expr(), p in unit_point()) {
        let e = expand(&parse(&f), &p, 4).unwrap();
        let den = expand(&parse("2 + sin(x*y)"), &p, 4).unwrap();
        let back = (&e * &den).div(&den).unwrap();
        for (u, v) in back.coeffs().iter().zip(e.coeffs()) {
            prop_assert!(close(*u, *v, 1e-10));
        }
        let pos = expand(&parse(&format!("1 + ({f})^2")), &p, 4).unwrap();
        let round = pos.ln().unwrap().exp();
        for (u, v) in round.coeffs().iter().zip(pos.coeffs()) {
            prop_assert!(close(*u, *v, 1e-10));
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), count in 1usize..20) {
        let spec = warped_type9(0.0, 3, -1.0, false).unwrap();
        let a = sample_points(&spec, count, seed).unwrap();
        prop_assert_eq!(&a, &sample_points(&spec, count, seed).unwrap());
        prop_assert!(a.iter().all(|p| spec.in_domain(p)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curvature_symmetries_hold_at_random_points(seed in any::<u64>(), which in 0usize..2) {
        let spec = if which == 0 { space_form(-4.0, 3, false).unwrap() } else { warped_type9(0.0, 3, -1.0, false).unwrap() };
        let p = &sample_points(&spec, 1, seed).unwrap()[0];
        let b = curvature_bundle(&spec, p).unwrap();
        let d = 6;
        let r = |l: usize, k: usize, i: usize, j: usize| b.riemann_lowered[((l * d + k) * d + i) * d + j];
        let tol = 1e-10 * b.riemann_scale().max(1.0);
        for l in 0..d {
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        prop_assert!((r(l, k, i, j) + r(l, k, j, i)).abs() < tol);
                        prop_assert!((r(l, k, i, j) + r(k, l, i, j)).abs() < tol);
                        prop_assert!((r(l, k, i, j) - r(i, j, l, k)).abs() < tol);
                        prop_assert!((r(l, k, i, j) + r(l, i, j, k) + r(l, j, k, i)).abs() < tol);
                    }
                }
            }
        }
    }

    #[test]
    fn models_are_kahler_at_random_points(seed in any::<u64>(), t0 in -1.0f64..1.0) {
        let spec = warped_type9(t0, 3, -1.0, false).unwrap();
        let pts = sample_points(&spec, 2, seed).unwrap();
        prop_assert!(kahler_residuals(&spec, &pts).unwrap().max() < 1e-8);
        for p in &pts {
            let f = metric_frame(&spec, p).unwrap();
            let j2 = &f.j * &f.j + nalgebra::DMatrix::<f64>::identity(6, 6);
            prop_assert!(j2.amax() < 1e-12);
        }
    }
}
