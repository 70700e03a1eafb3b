use proptest::prelude::*;
use thinfilm::jetcalc::*;
use thinfilm::symexpr::{self, Poly};

fn p(s: &str) -> Poly {
    symexpr::poly(s).unwrap()
}

fn field(tau: &str, xi: &str, phi: &str) -> VectorField {
    VectorField::parse(tau, xi, phi).unwrap()
}

#[test]
fn total_derivative_of_flux() {
    let d = total_derivative(&p("f(u)*u_xxxxx"), Dir::X).unwrap();
    assert_eq!(d, p("df1(u)*u_x*u_xxxxx + f(u)*u_xxxxxx"));
    assert!(total_derivative(&p("x"), Dir::T).unwrap().is_zero());
    assert_eq!(total_derivative(&p("u^2"), Dir::X).unwrap(), p("2*u*u_x"));
    assert!(matches!(
        total_derivative(&p("u_xxxxxxx"), Dir::X),
        Err(JetError::Overflow { .. })
    ));
}

#[test]
fn prolongation_coefficients() {
    let pr = prolong(&field("0", "1", "0"), 6).unwrap();
    assert!(pr.values().all(Poly::is_zero));
    let pr = prolong(&field("0", "x", "0"), 6).unwrap();
    assert_eq!(pr[&(0, 1)], p("-u_x"));
    let pr = prolong(&field("t", "x/6", "0"), 6).unwrap();
    assert_eq!(pr[&(0, 1)], p("-u_x/6"));
    assert_eq!(pr[&(1, 0)], p("-u_t"));
    assert!(matches!(
        prolong(&field("1", "0", "0"), 7),
        Err(JetError::OrderTooHigh(7))
    ));
}

#[test]
fn residual_examples() {
    let f = p("f(u)");
    assert!(invariance_residual(&field("1", "0", "0"), &f)
        .unwrap()
        .is_zero());
    assert!(invariance_residual(&field("t", "x/6", "0"), &f)
        .unwrap()
        .is_zero());
    let r = invariance_residual(&field("0", "0", "1"), &f).unwrap();
    assert!(!r.is_zero());
    assert!(r.contains_function("f"));
    assert!(r.to_string().contains("df1(u)"));
}

#[test]
fn determining_system_matches_reference() {
    let f = p("f(u)");
    let raw: Vec<Poly> = extract_determining_system(&VectorField::opaque(), &f)
        .unwrap()
        .into_iter()
        .map(|e| impose(&e.coefficient, &first_line()).unwrap())
        .collect();
    let set = equation_set(&raw);
    assert!(set.contains(&strip_content(&p("(tau_t - 6*xi_x)*f(u) + phi*df1(u)"))));
    assert!(set.contains(&strip_content(&p("3*phi_xxu - 4*xi_xxx"))));
    let a = analyze_determining_system().unwrap();
    assert!(a.passed(), "{a:#?}");
    assert_eq!(a.extra.len(), 1);
}

fn jet_expr() -> impl Strategy<Value = String> {
    let leaf = prop::sample::select(vec![
        "u", "u_x", "u_xx", "u_t", "t", "x", "e^u", "f(u)", "u_xxx", "3", "1/2",
    ])
    .prop_map(String::from);
    leaf.prop_recursive(3, 12, 2, |inner| {
        (
            inner.clone(),
            inner,
            prop::sample::select(vec!["+", "*", "-"]),
        )
            .prop_map(|(a, b, op)| format!("({a}) {op} ({b})"))
    })
}

fn coefficient() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "0", "1", "t", "x", "u", "t*x", "u^2", "x*u", "e^t", "t^2 + u",
    ])
    .prop_map(String::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn total_derivatives_commute(s in jet_expr()) {
        let e = p(&s);
        let tx = total_derivative(&total_derivative(&e, Dir::X).unwrap(), Dir::T).unwrap();
        let xt = total_derivative(&total_derivative(&e, Dir::T).unwrap(), Dir::X).unwrap();
        prop_assert!((&tx - &xt).is_zero());
    }

    #[test]
    fn prolongation_is_linear(a in (coefficient(), coefficient(), coefficient()), b in (coefficient(), coefficient(), coefficient())) {
        let qa = field(&a.0, &a.1, &a.2);
        let qb = field(&b.0, &b.1, &b.2);
        let sum = prolong(&qa.add(&qb), 6).unwrap();
        let pa = prolong(&qa, 6).unwrap();
        let pb = prolong(&qb, 6).unwrap();
        for (k, v) in &sum {
            prop_assert!((v - &(&pa[k] + &pb[k])).is_zero());
        }
    }
}
