use std::f64::consts::PI;
use thinfilm::odeint::*;
use thinfilm::symexpr::{self, Env, Symbol};

fn y() -> Symbol {
    Symbol::var("y")
}

fn system(ode: &str, params: &[(&str, f64)]) -> OdeSystem {
    let env = param_env(&params.iter().cloned().collect());
    to_first_order(&symexpr::poly(ode).unwrap(), "v", &y(), &env).unwrap()
}

#[test]
fn first_order_forms() {
    assert_eq!(system("v_yy + v", &[]).dim, 2);
    let s = system("144*e^(lambda*v) - lambda*v_y", &[("lambda", 1.0)]);
    assert_eq!(s.dim, 1);
    assert!((s.eval(0.0, &[0.0])[0] - 144.0).abs() < 1e-12);
    // v^m v5 + alpha v = k  =>  v5 = (k - alpha v) v^-m.
    let s = system(
        "v^m*v_yyyyy + alpha*v - k",
        &[("m", 2.0), ("alpha", 3.0), ("k", 1.0)],
    );
    assert_eq!(s.dim, 5);
    let out = s.eval(0.0, &[2.0, 0.0, 0.0, 0.0, 0.0]);
    assert!((out[4] - (1.0 - 6.0) / 4.0).abs() < 1e-14);
    assert!(s.is_singular(0.0, &[0.0, 1.0, 0.0, 0.0, 0.0]));
    let err =
        to_first_order(&symexpr::poly("v^2 + y").unwrap(), "v", &y(), &Env::new()).unwrap_err();
    assert!(matches!(err, OdeError::NoDerivative(..)));
    let err =
        to_first_order(&symexpr::poly("v_y^2 + v").unwrap(), "v", &y(), &Env::new()).unwrap_err();
    assert!(matches!(err, OdeError::NotSolvable(..)));
}

#[test]
fn sine_endpoint() {
    let s = system("v_yy + v", &[]);
    let tr = integrate(&s, 0.0, &[0.0, 1.0], PI, &Tolerances::default()).unwrap();
    assert!(tr.last_state()[0].abs() < 1e-8, "{}", tr.last_state()[0]);
    assert!((tr.last_state()[1] + 1.0).abs() < 1e-8);
}

#[test]
fn fixed_step_order() {
    let s = system("v_yy + v", &[]);
    let err = |n| integrate_fixed(&s, 0.0, &[0.0, 1.0], PI, n)[0].abs();
    let mut prev = err(8);
    for n in [16, 32, 64] {
        let e = err(n);
        if e < 1e-12 {
            break;
        }
        assert!(prev / e >= 8.0, "n = {n}: {prev} -> {e}");
        prev = e;
    }
}

#[test]
fn travelling_wave_m1_matches_quintic() {
    let (alpha, c) = (2.0, [1.0, 0.5, 0.2, 0.1, 0.05]);
    let exact = |s: f64, d: usize| -> f64 {
        // d-th derivative of -(alpha/120) s^5 + sum c_i s^i.
        let mut coef = vec![c[0], c[1], c[2], c[3], c[4], -alpha / 120.0];
        for _ in 0..d {
            coef = (1..coef.len()).map(|i| coef[i] * i as f64).collect();
        }
        coef.iter().rev().fold(0.0, |acc, a| acc * s + a)
    };
    let sys = system("v*v_yyyyy + alpha*v", &[("alpha", alpha)]);
    let s0: Vec<f64> = (0..5).map(|d| exact(0.0, d)).collect();
    // Knots are exact at default tolerances (the method integrates quintics
    // exactly); the order-4 interpolant needs a tighter tolerance.
    let tr = integrate(&sys, 0.0, &s0, 2.0, &Tolerances::default()).unwrap();
    for (yy, st) in tr.ys.iter().zip(&tr.states) {
        assert!((st[0] - exact(*yy, 0)).abs() < 1e-9);
    }
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-14,
        ..Default::default()
    };
    let tr = integrate(&sys, 0.0, &s0, 2.0, &tol).unwrap();
    for i in 0..=40 {
        let s = 0.05 * i as f64;
        let v = dense_eval(&tr, s, 0).unwrap();
        assert!((v[0] - exact(s, 0)).abs() < 1e-9, "s = {s}");
    }
}

#[test]
fn blowup_ode_matches_separable_solution() {
    let sys = system("144*e^(lambda*v) - lambda*v_y", &[("lambda", 1.0)]);
    let exact = |t: f64| (1.0 / (144.0 * (1.0 - t))).ln();
    // The solution's growth amplifies global error beyond the default rtol.
    let tol = Tolerances {
        rtol: 1e-10,
        atol: 1e-13,
        ..Default::default()
    };
    let tr = integrate(&sys, 0.0, &[exact(0.0)], 0.9, &tol).unwrap();
    for (t, s) in tr.ys.iter().zip(&tr.states) {
        assert!((s[0] - exact(*t)).abs() < 1e-8, "t = {t}");
    }
    for i in 0..=90 {
        let t = 0.01 * i as f64;
        assert!((dense_eval(&tr, t, 0).unwrap()[0] - exact(t)).abs() < 1e-8);
    }
}

#[test]
fn dense_output_consistency() {
    let sys = system("v_yy + v", &[]);
    let tr = integrate(&sys, 0.0, &[0.0, 1.0], 3.0, &Tolerances::default()).unwrap();
    for (y, s) in tr.ys.iter().zip(&tr.states) {
        assert_eq!(&dense_eval(&tr, *y, 0).unwrap(), s);
        let d = dense_eval(&tr, *y, 1).unwrap();
        let f = sys.eval(*y, s);
        assert!((d[0] - f[0]).abs() < 1e-10 && (d[1] - f[1]).abs() < 1e-10);
    }
    // Third derivative against a central difference of the second.
    let (y0, h) = (1.3, 1e-4);
    let fd = (dense_eval(&tr, y0 + h, 2).unwrap()[0] - dense_eval(&tr, y0 - h, 2).unwrap()[0])
        / (2.0 * h);
    assert!((dense_eval(&tr, y0, 3).unwrap()[0] - fd).abs() < 1e-5);
    assert!(matches!(
        dense_eval(&tr, 4.0, 0),
        Err(OdeError::OutOfSpan { .. })
    ));
    assert!(matches!(
        dense_eval(&tr, 1.0, 4),
        Err(OdeError::DerivativeOrder(4))
    ));
}

#[test]
fn forward_backward_round_trip() {
    let sys = system("v_yyy + v*v_y", &[]);
    let tol = Tolerances::default();
    let s0 = [1.0, 0.2, -0.3];
    let fwd = integrate(&sys, 0.0, &s0, 1.5, &tol).unwrap();
    let back = integrate(&sys, 1.5, fwd.last_state(), 0.0, &tol).unwrap();
    for (a, b) in back.last_state().iter().zip(&s0) {
        assert!(
            (a - b).abs() < 10.0 * tol.rtol * (1.0 + b.abs()),
            "{a} vs {b}"
        );
    }
    // Dense output also works backwards.
    assert!(dense_eval(&back, 0.7, 0).is_ok());
}

#[test]
fn singularity_guard() {
    // v5 = (k - alpha v) v^-m with m = -2 drives v to zero.
    let sys = system(
        "v^(-2)*v_yyyyy + alpha*v - k",
        &[("alpha", 1.0), ("k", 0.0)],
    );
    let tr = integrate(
        &sys,
        0.0,
        &[1.0, -3.0, 0.0, 0.0, 0.0],
        5.0,
        &Tolerances::default(),
    )
    .unwrap();
    assert!(
        matches!(tr.stop, StopReason::Singular { .. }),
        "{:?}",
        tr.stop
    );
    assert!(tr.states.iter().flatten().all(|v| v.is_finite()));
    assert!(tr.last_state()[0] > 0.0);
}
