use num_traits::{Signed, Zero};
use proptest::prelude::*;
use thinfilm::jetcalc::VectorField;
use thinfilm::liesym::*;
use thinfilm::symexpr::{self, rat, ratio, Poly, Rational};

fn cases() -> Vec<ClassificationCase> {
    vec![
        classify(&NonlinearityFamily::Arbitrary).unwrap(),
        classify(&NonlinearityFamily::exponential_symbolic()).unwrap(),
        classify(&NonlinearityFamily::power_symbolic()).unwrap(),
    ]
}

fn field(tau: &str, xi: &str, phi: &str) -> VectorField {
    VectorField::parse(tau, xi, phi).unwrap()
}

#[test]
fn every_generator_is_a_symmetry() {
    for case in cases() {
        for (l, g) in case.labels.iter().zip(&case.generators) {
            let r = case.family.invariance_residual(g).unwrap();
            assert!(r.is_zero(), "{} {l}: {r}", case.family.label());
        }
    }
}

#[test]
fn optimal_system_members_are_symmetries() {
    for case in cases() {
        let opt = optimal_system(&case);
        assert_eq!(opt.len(), if case.generators.len() == 3 { 4 } else { 7 });
        for s in opt {
            let r = case.family.invariance_residual(&s.field).unwrap();
            assert!(r.is_zero(), "{} {}: {r}", case.family.label(), s.label);
        }
    }
}

#[test]
fn non_symmetries_are_rejected() {
    let cases = [
        (NonlinearityFamily::Arbitrary, field("0", "0", "1")),
        (NonlinearityFamily::power_symbolic(), field("0", "x", "0")),
        (
            NonlinearityFamily::exponential_symbolic(),
            field("t", "0", "0"),
        ),
    ];
    for (fam, q) in cases {
        assert!(!fam.invariance_residual(&q).unwrap().is_zero(), "{q}");
    }
}

#[test]
fn commutator_tables() {
    let c = cases();
    assert_eq!(
        c[0].commutator_table(),
        vec!["[Q1, Q2] = 0", "[Q1, Q3] = Q1", "[Q2, Q3] = (1/6)*Q2"]
    );
    for case in &c[1..] {
        assert_eq!(
            case.commutator_table(),
            vec![
                "[Q1, Q2] = Q2",
                "[Q1, Q3] = 0",
                "[Q1, Q4] = 0",
                "[Q2, Q3] = 0",
                "[Q2, Q4] = 0",
                "[Q3, Q4] = Q4"
            ]
        );
    }
}

#[test]
fn jacobi_identity_holds() {
    for case in cases() {
        let g = &case.generators;
        for i in 0..g.len() {
            for j in 0..g.len() {
                for k in 0..g.len() {
                    assert!(jacobi(&g[i], &g[j], &g[k]).unwrap().is_zero());
                }
            }
        }
    }
    let ops: Vec<_> = equivalence_algebra().into_iter().map(|(_, v)| v).collect();
    for a in &ops {
        for b in &ops {
            for c in &ops {
                assert!(jacobi(a, b, c).unwrap().is_zero());
            }
        }
    }
}

#[test]
fn equivalence_operators_satisfy_extended_criterion() {
    for (label, op) in equivalence_algebra() {
        let r = extended_residual(&op).unwrap();
        assert!(r.is_zero(), "{label}: {}", r.main);
    }
    // General form: psi = (6 c5 - c4) f.
    let general = VectorField::parse("c4*t + c1", "c5*x + c2", "c6*u + c3")
        .unwrap()
        .with_psi(symexpr::poly("(6*c5 - c4)*f").unwrap());
    assert!(extended_residual(&general).unwrap().is_zero());
    // Wrong weight on f is rejected.
    let wrong = field("t", "0", "0").with_psi(symexpr::poly("f").unwrap());
    assert!(!extended_residual(&wrong).unwrap().is_zero());
    let wrong = field("0", "0", "0").with_psi(symexpr::poly("u*f").unwrap());
    assert!(!extended_residual(&wrong).unwrap().is_zero());
}

#[test]
fn equivalence_algebra_is_closed() {
    let ops: Vec<_> = equivalence_algebra().into_iter().map(|(_, v)| v).collect();
    structure_constants(&ops).unwrap();
}

#[test]
fn power_family_scaling_of_x() {
    // Scaling x by 2 multiplies the coefficient of u^m by 2^6.
    let e = EquivalenceTransform::from_rationals([rat(0), rat(0), rat(0), rat(1), rat(2), rat(1)])
        .unwrap();
    let img = apply_equivalence(&e, &NonlinearityFamily::power_symbolic()).unwrap();
    match img {
        NonlinearityFamily::Power { m, scale } => {
            assert_eq!(m, Poly::param("m"));
            assert_eq!(scale, Poly::int(64));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn symbolic_form_preservation() {
    let t = EquivalenceTransform::symbolic();
    for fam in [
        NonlinearityFamily::Arbitrary,
        NonlinearityFamily::exponential_symbolic(),
        NonlinearityFamily::Explicit {
            f: symexpr::poly("u*e^(-u)").unwrap(),
        },
    ] {
        assert!(verify_form_preservation(&t, &fam).unwrap(), "{fam}");
    }
    let mut t0 = EquivalenceTransform::symbolic();
    t0.eps[2] = Poly::zero();
    assert!(verify_form_preservation(&t0, &NonlinearityFamily::power_symbolic()).unwrap());
    assert!(matches!(
        apply_equivalence(&t, &NonlinearityFamily::power_symbolic()),
        Err(LieError::FormBreaking(_))
    ));
}

#[test]
fn explicit_classification() {
    let c = classify(&NonlinearityFamily::parse("explicit:u*e^(-u)").unwrap()).unwrap();
    assert_eq!(c.generators.len(), 3);
    let c = classify(&NonlinearityFamily::parse("explicit:e^(2*u)").unwrap()).unwrap();
    assert_eq!(c.generators.len(), 4);
    let c = classify(&NonlinearityFamily::parse("explicit:u^3").unwrap()).unwrap();
    assert_eq!(c.generators.len(), 4);
    for g in &c.generators {
        assert!(c.family.invariance_residual(g).unwrap().is_zero());
    }
}

fn small_rational() -> impl Strategy<Value = Rational> {
    (-9i64..=9, 1i64..=5).prop_map(|(n, d)| ratio(n, d))
}

fn nonzero_rational() -> impl Strategy<Value = Rational> {
    small_rational().prop_filter("nonzero", |r| !r.is_zero())
}

fn transform(shift_u: bool) -> impl Strategy<Value = EquivalenceTransform> {
    (
        small_rational(),
        small_rational(),
        small_rational(),
        nonzero_rational(),
        nonzero_rational(),
        nonzero_rational(),
    )
        .prop_map(move |(a, b, c, d, e, f)| {
            // The power family needs u > 0, so it only admits eps3 = 0, eps6 > 0.
            let (c, f) = if shift_u {
                (c, f)
            } else {
                (Rational::zero(), f.abs())
            };
            EquivalenceTransform::from_rationals([a, b, c, d, e, f]).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equivalence_action_composes(a in transform(true), b in transform(true), ap in transform(false), bp in transform(false)) {
        let exp = NonlinearityFamily::exponential_symbolic();
        let lhs = apply_equivalence(&b, &apply_equivalence(&a, &exp).unwrap()).unwrap();
        let rhs = apply_equivalence(&b.compose(&a), &exp).unwrap();
        prop_assert_eq!(lhs.f_expr(), rhs.f_expr());

        let pow = NonlinearityFamily::power_symbolic();
        let lhs = apply_equivalence(&bp, &apply_equivalence(&ap, &pow).unwrap()).unwrap();
        let rhs = apply_equivalence(&bp.compose(&ap), &pow).unwrap();
        prop_assert_eq!(lhs.f_expr(), rhs.f_expr());

        let ex = NonlinearityFamily::Explicit { f: symexpr::poly("u^2 + 1").unwrap() };
        let lhs = apply_equivalence(&b, &apply_equivalence(&a, &ex).unwrap()).unwrap();
        let rhs = apply_equivalence(&b.compose(&a), &ex).unwrap();
        prop_assert_eq!(lhs.f_expr(), rhs.f_expr());
    }

    #[test]
    fn numeric_transforms_preserve_form(a in transform(true), ap in transform(false)) {
        prop_assert!(verify_form_preservation(&a, &NonlinearityFamily::exponential_symbolic()).unwrap());
        prop_assert!(verify_form_preservation(&ap, &NonlinearityFamily::power_symbolic()).unwrap());
    }

    #[test]
    fn commutator_is_antisymmetric(i in 0usize..4, j in 0usize..4) {
        let case = classify(&NonlinearityFamily::power_symbolic()).unwrap();
        let ab = commutator(&case.generators[i], &case.generators[j]).unwrap();
        let ba = commutator(&case.generators[j], &case.generators[i]).unwrap();
        prop_assert!(ab.add(&ba).is_zero());
    }
}
