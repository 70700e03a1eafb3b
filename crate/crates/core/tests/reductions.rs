use thinfilm::reductions::*;

#[test]
fn every_table_row_reduces() {
    for case in CaseId::ALL {
        for r in catalog(case) {
            let rep = verify_row(&r).unwrap();
            println!(
                "{} {:?} {:e} {}",
                rep.id, rep.method, rep.max_residual, rep.detail
            );
            assert!(rep.passed, "{}: {}", rep.id, rep.detail);
        }
    }
}

#[test]
fn first_integrals_differentiate_to_table_rows() {
    use thinfilm::liesym::NonlinearityFamily;
    use thinfilm::symexpr::Poly;
    let alpha = Poly::param("alpha");
    let k = Poly::param("k");
    let fis = vec![
        first_integral_travelling(&NonlinearityFamily::Arbitrary, &alpha, &k).unwrap(),
        first_integral_travelling(&NonlinearityFamily::exponential_symbolic(), &alpha, &k).unwrap(),
        first_integral_travelling(&NonlinearityFamily::power_symbolic(), &alpha, &k).unwrap(),
        first_integral_source(&Poly::param("m"), &k).unwrap(),
        first_integral_sink(&alpha, &k).unwrap(),
    ];
    for fi in fis {
        let rep = fi.check_derivative().unwrap();
        println!("{} {}", rep.id, rep.detail);
        assert!(rep.passed, "{}: {}", rep.id, rep.detail);
    }
}

#[test]
fn closed_forms_solve_the_equation() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for id in SolutionId::ALL {
        for params in id.parameter_sets() {
            let sol = closed_form(id, &params).unwrap();
            let rep = pde_residual(&sol, 50, &mut rng).unwrap();
            println!(
                "{} {:?} {:e} {}",
                rep.id, rep.method, rep.max_residual, rep.detail
            );
            assert!(rep.passed, "{}: {}", rep.id, rep.max_residual);
        }
    }
}

fn params(pairs: &[(&str, f64)]) -> std::collections::BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn closed_form_values() {
    let b = closed_form(
        SolutionId::BlowupExp,
        &params(&[("lambda", 1.0), ("x0", 0.0), ("t0", 1.0)]),
    )
    .unwrap();
    let expected = (0.5f64.powi(6) / 144.0).ln();
    assert!((b.eval(0.0, 0.5).unwrap() - expected).abs() < 1e-12);
    assert!((expected + 9.128696).abs() < 1e-6);
    // Outside the validity domain.
    assert!(b.eval(0.0, 3.0).is_err());
    assert!(b.eval(1.5, 0.1).is_err());

    let w = closed_form(
        SolutionId::WaitingTimePower,
        &params(&[("m", 1.0), ("t0", 1.0)]),
    )
    .unwrap();
    let (t, x) = (0.25, 1.3);
    assert!((w.eval(t, x).unwrap() - x.powi(6) / (5040.0 * (1.0 - t))).abs() < 1e-12);
    assert_eq!(w.eval(t, -0.7).unwrap(), 0.0);
    assert_eq!(waiting_time_product(1.0), 5040.0);

    let r = closed_form(
        SolutionId::RationalTwM1,
        &params(&[
            ("alpha", 2.0),
            ("c0", 1.0),
            ("c1", 0.0),
            ("c2", 0.0),
            ("c3", 0.0),
            ("c4", 0.0),
        ]),
    )
    .unwrap();
    let s: f64 = 0.9 - 2.0 * 0.3;
    assert!((r.eval(0.3, 0.9).unwrap() - (1.0 - s.powi(5) / 60.0)).abs() < 1e-12);
}

#[test]
fn inadmissible_parameters_are_rejected() {
    for m in [1.5, 2.0, 3.0, 6.0, -6.0] {
        let e = closed_form(
            SolutionId::WaitingTimePower,
            &params(&[("m", m), ("t0", 1.0)]),
        )
        .unwrap_err();
        assert!(e.to_string().contains("prod"), "{e}");
    }
    assert!(closed_form(
        SolutionId::BlowupExp,
        &params(&[("lambda", 0.0), ("x0", 0.0), ("t0", 1.0)])
    )
    .is_err());
    assert!(closed_form(SolutionId::BlowupExp, &params(&[("lambda", 1.0)])).is_err());
    assert!(first_integral_source(
        &thinfilm::symexpr::Poly::int(-6),
        &thinfilm::symexpr::Poly::zero()
    )
    .is_err());
}

#[test]
fn waiting_time_family_is_closed_under_the_group() {
    use rand::SeedableRng;
    use thinfilm::symexpr::{check_zero, poly, SampleConfig, Symbol};
    let sol = closed_form(
        SolutionId::WaitingTimePower,
        &params(&[("m", 1.0), ("t0", 1.0)]),
    )
    .unwrap();
    let u = &sol.pieces[0].value;
    let t0 = Symbol::param("t0");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let cfg = SampleConfig::default();
    let zero = |e: thinfilm::symexpr::Poly, rng: &mut rand_chacha::ChaCha8Rng| {
        check_zero(&e, rng, &cfg).unwrap().passed()
    };
    // Q1 with e^eps = 2: t -> 2t, u -> 2^(1/m) u, refits to t0 / 2.
    let q1 = &poly("2^(1/m)").unwrap() * &u.subs(&Symbol::t(), &poly("2*t").unwrap()).unwrap();
    let refit = u.subs(&t0, &poly("t0/2").unwrap()).unwrap();
    assert!(zero(&q1 - &refit, &mut rng));
    // Q2 (time shift by 3/4) refits to t0 + 3/4.
    let q2 = u.subs(&Symbol::t(), &poly("t - 3/4").unwrap()).unwrap();
    let refit = u.subs(&t0, &poly("t0 + 3/4").unwrap()).unwrap();
    assert!(zero(&q2 - &refit, &mut rng));
    // Q3 leaves every member fixed.
    let q3 = &poly("3^(-6/m)").unwrap() * &u.subs(&Symbol::x(), &poly("3*x").unwrap()).unwrap();
    assert!(zero(&q3 - u, &mut rng));
    // A wrong refit is detected.
    let wrong = u.subs(&t0, &poly("t0/3").unwrap()).unwrap();
    assert!(!zero(&q1 - &wrong, &mut rng));
}

#[test]
fn perturbed_rows_fail() {
    for case in CaseId::ALL {
        let mut r = catalog(case).pop().unwrap();
        r.ode = match r.ode {
            ReducedOde::Flux { rhs } => ReducedOde::Flux {
                rhs: format!("{rhs} + v"),
            },
            ReducedOde::Equation { lhs, rhs } => ReducedOde::Equation {
                lhs,
                rhs: format!("{rhs} + 2"),
            },
        };
        assert!(!verify_row(&r).unwrap().passed, "{}", r.id());
    }
    let mut r = catalog(CaseId::Power).remove(1);
    r.ode = ReducedOde::Equation {
        lhs: "v^(m + 1)".into(),
        rhs: "v_y".into(),
    };
    assert!(!verify_row(&r).unwrap().passed);
}

#[test]
fn printed_chain_odes_are_satisfied() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let chains = chained_reductions();
    assert_eq!(chains.len(), 4);
    for c in &chains {
        for setup in ChainSetup::defaults(c.kind) {
            let out = verify_chain(c, &setup, &mut rng).unwrap();
            assert!(out.report.passed, "{}: {:?}", out.report.id, out.finding);
            assert!(out.finding.is_none());
        }
    }
    let closed =
        verify_chain_closed_form(2.0, [1.0, 0.5, -0.3, 0.2, 0.1], &[0.3, 0.7, 1.1, -0.4]).unwrap();
    assert!(closed.passed, "{}", closed.max_residual);
}

#[test]
fn altered_chain_ode_is_flagged() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for mut c in chained_reductions() {
        let setup = ChainSetup::defaults(c.kind).remove(0);
        // A single changed coefficient must be caught.
        c.target = c
            .target
            .replacen("105", "104", 1)
            .replacen("625*x2^3", "624*x2^3", 1);
        let out = verify_chain(&c, &setup, &mut rng).unwrap();
        assert!(!out.report.passed, "{}", c.id());
        assert!(out
            .finding
            .unwrap()
            .contains("possible transcription error"));
    }
}

#[test]
fn fourth_order_symmetry_case_split() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    assert!(derive_fourth_order_condition().unwrap().passed);
    let cases = fourth_order_symmetry_cases();
    assert_eq!(cases.len(), 5);
    for c in cases {
        let rep = c.verify(&mut rng).unwrap();
        assert!(rep.passed, "{}: {}", rep.id, rep.detail);
    }
    // A wrong weight for phi in case (ii) is rejected.
    let mut bad = fourth_order_symmetry_cases().remove(2);
    bad.claimed = Some(("a*x1 + b".into(), "-(3/5)*a*u1".into()));
    assert!(!bad.verify(&mut rng).unwrap().passed);
}

#[test]
fn source_solution_conserves_mass() {
    use thinfilm::odeint::{dense_eval, Tolerances};
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-13,
        ..Tolerances::default()
    };
    let traj = integrate_source(1.0, 0.0, 0.0, &[1.0, 0.0, -0.5, 0.0, 0.1], 6.0, &tol).unwrap();
    // Edge of the support: first sign change of v, refined by bisection.
    let i = traj
        .states
        .iter()
        .position(|s| s[0] <= 0.0)
        .expect("profile reaches zero");
    let (mut lo, mut hi) = (traj.ys[i - 1], traj.ys[i]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dense_eval(&traj, mid, 0).unwrap()[0] > 0.0 {
            lo = mid
        } else {
            hi = mid
        }
    }
    let edge = lo;
    let v = |y: f64| dense_eval(&traj, y.abs(), 0).unwrap()[0];
    let mass = |t: f64| {
        // u = t^(-1/7) v(x t^(-1/7)), even in x; Simpson on [0, edge t^(1/7)].
        let scale = t.powf(1.0 / 7.0);
        let n = 4000;
        let h = edge * scale / n as f64;
        let s: f64 = (0..=n)
            .map(|j| {
                let w = if j == 0 || j == n {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * v(j as f64 * h / scale) / scale
            })
            .sum();
        2.0 * s * h / 3.0
    };
    let (m1, m10) = (mass(1.0), mass(10.0));
    assert!(((m10 - m1) / m1).abs() < 1e-4, "{m1} {m10}");
}
