use osgood_wave::drift::{parse_expr, BinOp, DriftFunction, Expr, Func};
use proptest::prelude::*;

fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        0.0..100.0f64,
        (1e-9..1e9f64),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![literal().prop_map(Expr::Num), Just(Expr::X)];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let func = prop::sample::select(Func::ALL.to_vec());
        let op = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
        prop_oneof![
            (func, inner.clone()).prop_map(|(f, a)| Expr::call(f, a)),
            (op, inner.clone(), inner).prop_map(|(o, l, r)| Expr::bin(o, l, r)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printing_then_parsing_gives_the_same_tree(e in expr()) {
        let printed = e.to_string();
        let back = parse_expr(&printed).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn evaluation_is_deterministic(e in expr(), x in -50.0..50.0f64) {
        let (a, b) = (e.eval(x), e.clone().eval(x));
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn logp_is_at_least_one(z in -1e12..1e12f64) {
        prop_assert!(Func::Logp.apply(z) >= 1.0);
    }

    #[test]
    fn log_power_family_dominates_identity(x in 0.0..1e9f64, delta in 0.0..5.0f64) {
        let b = DriftFunction::logp_family(delta);
        prop_assert!(b.eval(x) >= x);
    }
}
