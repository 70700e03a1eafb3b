//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::{Duration, Instant};
use thinfilm::jetcalc::{analyze_determining_system, VectorField};
use thinfilm::liesym::{
    apply_equivalence, classify, equivalence_algebra, extended_residual, jacobi,
    verify_form_preservation, ClassificationCase, EquivalenceTransform, NonlinearityFamily,
};
use thinfilm::odeint::{dense_eval, integrate, param_env, to_first_order, OdeSystem, Tolerances};
use thinfilm::pdesim::{convergence_study, run, SimConfig};
use thinfilm::reductions::{
    catalog, chained_reductions, closed_form, first_integral_sink, first_integral_source,
    first_integral_travelling, pde_residual, verify_chain, verify_row, CaseId, ChainSetup, Method,
    SolutionId,
};
use thinfilm::symexpr::{self, ratio, Poly, Rational, Symbol};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took <= limit, || format!("took {took:?}, limit {limit:?}"))
}

fn families() -> [NonlinearityFamily; 3] {
    [
        NonlinearityFamily::Arbitrary,
        NonlinearityFamily::exponential_symbolic(),
        NonlinearityFamily::power_symbolic(),
    ]
}

fn symmetries() -> Outcome {
    let start = Instant::now();
    let mut count = 0;
    for fam in families() {
        let case = classify(&fam).map_err(|e| e.to_string())?;
        for (l, g) in case.labels.iter().zip(&case.generators) {
            let r = fam.invariance_residual(g).map_err(|e| e.to_string())?;
            ensure(r.is_zero(), || format!("{} {l}: residual {r}", fam.label()))?;
            count += 1;
        }
    }
    ensure(count == 11, || format!("{count} generators"))?;
    let negatives = [
        (NonlinearityFamily::Arbitrary, ("0", "0", "1")),
        (NonlinearityFamily::power_symbolic(), ("0", "x", "0")),
        (NonlinearityFamily::exponential_symbolic(), ("t", "0", "0")),
    ];
    for (fam, (a, b, c)) in negatives {
        let q = VectorField::parse(a, b, c).map_err(|e| e.to_string())?;
        let r = fam.invariance_residual(&q).map_err(|e| e.to_string())?;
        ensure(!r.is_zero(), || format!("{q} accepted for {}", fam.label()))?;
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "11 generators zero, 3 non-symmetries nonzero in {:?}",
        start.elapsed()
    ))
}

fn determining_system() -> Outcome {
    let start = Instant::now();
    let a = analyze_determining_system().map_err(|e| e.to_string())?;
    ensure(a.passed(), || format!("{a:?}"))?;
    ensure(a.missing.is_empty(), || format!("missing {:?}", a.missing))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{} raw coefficients, reference set found, linear forms leave {:?}",
        a.raw_equations, a.linear
    ))
}

fn random_transform(rng: &mut ChaCha8Rng) -> EquivalenceTransform {
    let mut r = |nonzero: bool| loop {
        let v = ratio(rng.gen_range(-9..=9), rng.gen_range(1..=5));
        if !nonzero || v != Rational::from_integer(0.into()) {
            break v;
        }
    };
    EquivalenceTransform::from_rationals([r(false), r(false), r(false), r(true), r(true), r(true)])
        .expect("nonzero scalings")
}

fn equivalence() -> Outcome {
    for (label, op) in equivalence_algebra() {
        let r = extended_residual(&op).map_err(|e| e.to_string())?;
        ensure(r.is_zero(), || format!("{label}: {}", r.main))?;
    }
    let sym = EquivalenceTransform::symbolic();
    for fam in [
        NonlinearityFamily::Arbitrary,
        NonlinearityFamily::exponential_symbolic(),
    ] {
        ensure(
            verify_form_preservation(&sym, &fam).map_err(|e| e.to_string())?,
            || format!("{fam} not preserved"),
        )?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let exp = NonlinearityFamily::exponential_symbolic();
    let explicit = NonlinearityFamily::Explicit {
        f: symexpr::poly("u^2 + 1").map_err(|e| e.to_string())?,
    };
    for i in 0..10 {
        let (a, b) = (random_transform(&mut rng), random_transform(&mut rng));
        for fam in [&exp, &explicit] {
            let step = |t: &EquivalenceTransform, f: &NonlinearityFamily| {
                apply_equivalence(t, f).map_err(|e| e.to_string())
            };
            let lhs = step(&b, &step(&a, fam)?)?;
            let rhs = step(&b.compose(&a), fam)?;
            ensure(lhs.f_expr() == rhs.f_expr(), || {
                format!("pair {i}: {} vs {}", lhs.f_expr(), rhs.f_expr())
            })?;
        }
    }
    Ok("6 operators satisfy the extended criterion; symbolic transform preserves form; 10 pairs compose".into())
}

fn commutators() -> Outcome {
    let cases: Vec<ClassificationCase> = families()
        .iter()
        .map(classify)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let t0 = cases[0].commutator_table();
    ensure(
        t0.contains(&"[Q1, Q3] = Q1".to_string())
            && t0.contains(&"[Q2, Q3] = (1/6)*Q2".to_string()),
        || format!("case 1: {t0:?}"),
    )?;
    let expected = [
        "[Q1, Q2] = Q2",
        "[Q1, Q3] = 0",
        "[Q1, Q4] = 0",
        "[Q2, Q3] = 0",
        "[Q2, Q4] = 0",
        "[Q3, Q4] = Q4",
    ];
    for c in &cases[1..] {
        let t = c.commutator_table();
        ensure(t == expected, || format!("{}: {t:?}", c.family.label()))?;
    }
    let mut triples = 0;
    for c in &cases {
        let g = &c.generators;
        for a in g {
            for b in g {
                for d in g {
                    ensure(
                        jacobi(a, b, d).map_err(|e| e.to_string())?.is_zero(),
                        || "Jacobi identity fails".into(),
                    )?;
                    triples += 1;
                }
            }
        }
    }
    Ok(format!("tables match, Jacobi holds for {triples} triples"))
}

fn reduction_tables() -> Outcome {
    let start = Instant::now();
    let mut n = 0;
    let mut worst: f64 = 0.0;
    for case in CaseId::ALL {
        for row in catalog(case) {
            let rep = verify_row(&row).map_err(|e| e.to_string())?;
            ensure(rep.passed, || format!("{}: {}", rep.id, rep.detail))?;
            worst = worst.max(rep.max_residual);
            n += 1;
        }
    }
    ensure(n == 18, || format!("{n} rows"))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!("18 rows, worst sampled residual {worst:.1e}"))
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for id in [
        SolutionId::BlowupExp,
        SolutionId::WaitingTimePower,
        SolutionId::RationalTwM1,
    ] {
        let sets = id.parameter_sets();
        ensure(sets.len() == 3, || {
            format!("{} has {} parameter sets", id.name(), sets.len())
        })?;
        for params in sets {
            let sol = closed_form(id, &params).map_err(|e| e.to_string())?;
            let rep = pde_residual(&sol, 50, &mut rng).map_err(|e| e.to_string())?;
            ensure(rep.passed && rep.max_residual < 1e-9, || {
                format!("{}: {:e}", rep.id, rep.max_residual)
            })?;
            worst = worst.max(rep.max_residual);
        }
    }
    Ok(format!("9 solutions, worst residual {worst:.1e}"))
}

fn first_integrals() -> Outcome {
    let alpha = Poly::param("alpha");
    let k = Poly::param("k");
    let fis = [
        first_integral_travelling(&NonlinearityFamily::Arbitrary, &alpha, &k),
        first_integral_travelling(&NonlinearityFamily::exponential_symbolic(), &alpha, &k),
        first_integral_travelling(&NonlinearityFamily::power_symbolic(), &alpha, &k),
        first_integral_source(&Poly::param("m"), &k),
        first_integral_sink(&alpha, &k),
    ];
    for fi in fis {
        let rep = fi
            .and_then(|f| f.check_derivative())
            .map_err(|e| e.to_string())?;
        ensure(rep.passed && rep.method == Method::Symbolic, || {
            format!("{}: {}", rep.id, rep.detail)
        })?;
    }
    Ok("5 first integrals differentiate to their rows".into())
}

fn chains() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    let mut findings = Vec::new();
    for chain in chained_reductions() {
        for setup in ChainSetup::defaults(chain.kind) {
            let out = verify_chain(&chain, &setup, &mut rng).map_err(|e| e.to_string())?;
            if let Some(f) = out.finding {
                findings.push(format!("{}: {f}", chain.id()));
            } else {
                ensure(out.report.max_residual < 1e-6, || {
                    format!("{}: {:e}", out.report.id, out.report.max_residual)
                })?;
            }
            worst = worst.max(out.report.max_residual);
        }
    }
    within(start, Duration::from_secs(120))?;
    if findings.is_empty() {
        Ok(format!(
            "4 target ODEs satisfied, worst residual {worst:.1e}"
        ))
    } else {
        Ok(format!("findings: {}", findings.join("; ")))
    }
}

fn ode_system(ode: &str, params: &[(&str, f64)]) -> Result<OdeSystem, String> {
    let env = param_env(&params.iter().cloned().collect());
    let p = symexpr::poly(ode).map_err(|e| e.to_string())?;
    to_first_order(&p, "v", &Symbol::var("y"), &env).map_err(|e| e.to_string())
}

fn ode_integrator() -> Outcome {
    let sine = ode_system("v_yy + v", &[])?;
    let tr = integrate(&sine, 0.0, &[0.0, 1.0], PI, &Tolerances::default())
        .map_err(|e| e.to_string())?;
    let e_sine = tr.last_state()[0]
        .abs()
        .max((tr.last_state()[1] + 1.0).abs());
    ensure(e_sine < 1e-8, || format!("sine endpoint error {e_sine:e}"))?;

    let (alpha, c) = (2.0, [1.0, 0.5, 0.2, 0.1, 0.05]);
    let quintic = |s: f64, d: usize| {
        let mut coef = vec![c[0], c[1], c[2], c[3], c[4], -alpha / 120.0];
        for _ in 0..d {
            coef = (1..coef.len()).map(|i| coef[i] * i as f64).collect();
        }
        coef.iter().rev().fold(0.0, |acc, a| acc * s + a)
    };
    let tw = ode_system("v*v_yyyyy + alpha*v", &[("alpha", alpha)])?;
    let s0: Vec<f64> = (0..5).map(|d| quintic(0.0, d)).collect();
    let tr = integrate(&tw, 0.0, &s0, 2.0, &Tolerances::default()).map_err(|e| e.to_string())?;
    let e_tw = tr
        .ys
        .iter()
        .zip(&tr.states)
        .map(|(y, s)| (s[0] - quintic(*y, 0)).abs())
        .fold(0.0, f64::max);
    ensure(e_tw < 1e-9, || format!("travelling wave error {e_tw:e}"))?;

    let blow = ode_system("144*e^(lambda*v) - lambda*v_y", &[("lambda", 1.0)])?;
    let exact = |t: f64| (1.0 / (144.0 * (1.0 - t))).ln();
    let tol = Tolerances {
        rtol: 1e-10,
        atol: 1e-13,
        ..Default::default()
    };
    let tr = integrate(&blow, 0.0, &[exact(0.0)], 0.9, &tol).map_err(|e| e.to_string())?;
    let mut e_blow: f64 = 0.0;
    for i in 0..=90 {
        let t = 0.01 * i as f64;
        let v = dense_eval(&tr, t, 0).map_err(|e| e.to_string())?[0];
        e_blow = e_blow.max((v - exact(t)).abs());
    }
    ensure(e_blow < 1e-8, || format!("row-2 ODE error {e_blow:e}"))?;
    Ok(format!(
        "sine {e_sine:.1e}, quintic {e_tw:.1e}, separable {e_blow:.1e}"
    ))
}

fn simulator() -> Outcome {
    let start = Instant::now();
    let parse = |s: &str| SimConfig::from_json(s).map_err(|e| e.to_string());
    let blow = parse(
        r#"{"grid": {"x_min": -0.8, "x_max": 0.8, "n": 64},
            "boundary": {"kind": "exact", "solution": "blowup_exp", "params": {"lambda": 1, "x0": -1, "t0": 1}},
            "stepper": {"kind": "sdirk2", "dt": 0.005}, "t_end": 0.05}"#,
    )?;
    let study = convergence_study(&blow, &[64, 128]).map_err(|e| e.to_string())?;
    let order = study.orders[0];
    ensure((1.7..=2.3).contains(&order), || format!("order {order}"))?;

    let periodic = parse(
        r#"{"family": "power:m=1", "grid": {"x_min": 0, "x_max": 1, "n": 32}, "boundary": {"kind": "periodic"},
            "initial": {"kind": "sine", "mean": 2, "amplitude": 0.1, "wavenumber": 1},
            "stepper": {"kind": "rk4", "sigma": 0.02}, "t_end": 1, "max_steps": 10000, "output_every": 1000}"#,
    )?;
    let r = run(&periodic).map_err(|e| e.to_string())?;
    let drift = r.mass_drift();
    ensure(r.steps == 10_000 && drift < 1e-12, || {
        format!("{} steps, drift {drift:e}", r.steps)
    })?;

    let waiting = parse(
        r#"{"grid": {"x_min": 0.2, "x_max": 2.0, "n": 64},
            "boundary": {"kind": "exact", "solution": "waiting_time_power", "params": {"m": 1, "t0": 1}},
            "stepper": {"kind": "sdirk2", "dt": 0.01}, "t_end": 0.2}"#,
    )?;
    let r = run(&waiting).map_err(|e| e.to_string())?;
    let l2 = r.last().l2_error.unwrap_or(f64::NAN);
    ensure(l2 < 1e-3, || format!("waiting-time L2 error {l2:e}"))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "order {order:.2}, mass drift {drift:.1e}, waiting-time L2 {l2:.1e}"
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("symmetry verification", symmetries),
        ("determining system", determining_system),
        ("equivalence algebra", equivalence),
        ("commutator tables", commutators),
        ("reduction tables", reduction_tables),
        ("closed-form solutions", closed_forms),
        ("first integrals", first_integrals),
        ("chained reductions", chains),
        ("ODE integrator", ode_integrator),
        ("PDE simulator", simulator),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(msg) => {
                println!("FAIL {:>2} {name}: {msg}", i + 1);
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
