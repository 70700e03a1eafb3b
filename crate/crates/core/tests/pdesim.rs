use thinfilm::pdesim::*;

fn blowup(n: usize) -> SimConfig {
    SimConfig::from_json(&format!(
        r#"{{"grid": {{"x_min": -0.8, "x_max": 0.8, "n": {n}}},
            "boundary": {{"kind": "exact", "solution": "blowup_exp", "params": {{"lambda": 1, "x0": -1, "t0": 1}}}},
            "stepper": {{"kind": "sdirk2", "dt": 0.005}}, "t_end": 0.05}}"#
    ))
    .unwrap()
}

fn periodic(n: usize, amplitude: f64) -> SimConfig {
    SimConfig::from_json(&format!(
        r#"{{"family": "power:m=1", "grid": {{"x_min": 0, "x_max": 1, "n": {n}}}, "boundary": {{"kind": "periodic"}},
            "initial": {{"kind": "sine", "mean": 2, "amplitude": {amplitude}, "wavenumber": 1}},
            "stepper": {{"kind": "rk4", "sigma": 0.02}}, "t_end": 1, "max_steps": 10000, "output_every": 1000}}"#
    ))
    .unwrap()
}

#[test]
fn constant_and_linear_profiles_are_steady() {
    let cfg = periodic(32, 0.0);
    let p = Problem::from_config(&cfg).unwrap();
    let du = flux_divergence(
        &p,
        &FieldState {
            t: 0.0,
            u: vec![2.0; 32],
        },
    )
    .unwrap();
    assert!(du.iter().all(|&d| d == 0.0));
    // f = u with u = x + 1 on a dyadic grid: the stencil annihilates it exactly.
    let cfg = SimConfig::from_json(
        r#"{"grid": {"x_min": 0, "x_max": 1, "n": 63},
            "boundary": {"kind": "exact", "solution": "rational_tw_m1",
                         "params": {"alpha": 0, "c0": 1, "c1": 1, "c2": 0, "c3": 0, "c4": 0}},
            "stepper": {"kind": "rk4", "sigma": 0.02}, "t_end": 0}"#,
    )
    .unwrap();
    let p = Problem::from_config(&cfg).unwrap();
    assert_eq!(p.dx(), 1.0 / 64.0);
    let u: Vec<f64> = p.nodes().iter().map(|x| x + 1.0).collect();
    let du = flux_divergence(&p, &FieldState { t: 0.0, u }).unwrap();
    assert!(du.iter().all(|&d| d == 0.0), "{du:?}");
}

#[test]
fn blowup_profile_has_the_right_time_derivative() {
    let p = Problem::from_config(&blowup(128)).unwrap();
    let u: Vec<f64> = p
        .nodes()
        .iter()
        .map(|&x| p.exact_at(0.0, x).unwrap())
        .collect();
    let du = flux_divergence(&p, &FieldState { t: 0.0, u }).unwrap();
    // u_t = 1 / (lambda (t0 - t)) = 1 at t = 0.
    let err = du.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    let p64 = Problem::from_config(&blowup(64)).unwrap();
    let u: Vec<f64> = p64
        .nodes()
        .iter()
        .map(|&x| p64.exact_at(0.0, x).unwrap())
        .collect();
    let du = flux_divergence(&p64, &FieldState { t: 0.0, u }).unwrap();
    let err64 = du.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    assert!(err < 0.05, "{err}");
    let ratio = err64 / err;
    assert!((3.0..5.0).contains(&ratio), "{err64} {err}");
}

#[test]
fn blowup_run_converges_at_second_order() {
    let study = convergence_study(&blowup(64), &[64, 128]).unwrap();
    assert!(study.l2_errors[0] < 1e-3, "{:?}", study.l2_errors);
    let ratio = study.l2_errors[0] / study.l2_errors[1];
    assert!((3.0..5.0).contains(&ratio), "{ratio}");
    assert!((1.7..=2.3).contains(&study.orders[0]), "{:?}", study.orders);
}

#[test]
fn periodic_run_conserves_mass() {
    let r = run(&periodic(32, 0.1)).unwrap();
    assert_eq!(r.steps, 10_000);
    assert!(r.mass_drift() < 1e-12, "{}", r.mass_drift());
    // A single RK4 step also telescopes.
    let cfg = periodic(32, 0.1);
    let p = Problem::from_config(&cfg).unwrap();
    let s0 = initial_state(&p, &cfg).unwrap();
    let s1 = step(&p, &s0, &cfg.stepper, 1.0).unwrap();
    let (m0, m1): (f64, f64) = (s0.u.iter().sum(), s1.u.iter().sum());
    assert!((m0 - m1).abs() <= 1e-14 * m0);
}

#[test]
fn small_perturbations_decay() {
    let mut cfg = periodic(32, 1e-6);
    cfg.max_steps = Some(3000);
    cfg.output_every = 300;
    let p = Problem::from_config(&cfg).unwrap();
    let mut s = initial_state(&p, &cfg).unwrap();
    let norm = |u: &[f64]| {
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        u.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt()
    };
    let mut last = norm(&s.u);
    let first = last;
    for _ in 0..10 {
        for _ in 0..300 {
            s = step(&p, &s, &cfg.stepper, 1.0).unwrap();
        }
        let now = norm(&s.u);
        assert!(now <= last, "{now} > {last}");
        last = now;
    }
    assert!(last < first);
}

#[test]
fn waiting_time_forced_run() {
    let cfg = SimConfig::from_json(
        r#"{"grid": {"x_min": 0.2, "x_max": 2.0, "n": 64},
            "boundary": {"kind": "exact", "solution": "waiting_time_power", "params": {"m": 1, "t0": 1}},
            "stepper": {"kind": "sdirk2", "dt": 0.01}, "t_end": 0.2, "output_every": 5}"#,
    )
    .unwrap();
    let r = run(&cfg).unwrap();
    let last = r.last();
    assert!((last.t - 0.2).abs() < 1e-12);
    assert!(last.rel_l2_error.unwrap() < 1e-3, "{last:?}");
    assert!(r
        .timeseries_csv()
        .starts_with("t,L2_error,Linf_error,mass\n"));
    assert_eq!(r.final_csv().lines().count(), 65);
}

#[test]
fn rational_travelling_wave_forced_run() {
    let cfg = SimConfig::from_json(
        r#"{"grid": {"x_min": 0, "x_max": 1, "n": 64},
            "boundary": {"kind": "exact", "solution": "rational_tw_m1",
                         "params": {"alpha": 1, "c0": 2, "c1": 0, "c2": 0, "c3": 0, "c4": 0}},
            "stepper": {"kind": "sdirk2", "dt": 0.002}, "t_end": 0.02}"#,
    )
    .unwrap();
    let r = run(&cfg).unwrap();
    assert!(r.last().linf_error.unwrap() < 1e-6, "{:?}", r.last());
}

#[test]
fn config_errors_name_the_field() {
    let bad = r#"{"grid": {"x_min": 0, "x_max": 1, "n": 8}, "boundary": {"kind": "periodic"},
                  "stepper": {"kind": "rk4", "sigma": 0.02}, "t_end": 1}"#;
    assert!(SimConfig::from_json(bad)
        .unwrap_err()
        .to_string()
        .contains("grid.n"));
    let bad = r#"{"family": "power:m=1", "grid": {"x_min": 0, "x_max": 1, "n": 32}, "boundary": {"kind": "periodic"},
                  "initial": {"kind": "sine", "mean": 2, "amplitude": 0.1, "wavenumber": 1},
                  "stepper": {"kind": "rk4", "sigma": 0.5}, "t_end": 1}"#;
    assert!(SimConfig::from_json(bad)
        .unwrap_err()
        .to_string()
        .contains("stepper.sigma"));
    assert!(SimConfig::from_json("{").is_err());
}

#[test]
fn fractional_power_requires_positive_film() {
    let cfg = SimConfig::from_json(
        r#"{"family": "power:m=1/2", "grid": {"x_min": 0, "x_max": 1, "n": 32}, "boundary": {"kind": "periodic"},
            "initial": {"kind": "sine", "mean": 0.05, "amplitude": 0.1, "wavenumber": 1},
            "stepper": {"kind": "rk4", "sigma": 0.02}, "t_end": 1, "max_steps": 1}"#,
    )
    .unwrap();
    assert!(matches!(run(&cfg), Err(SimError::Positivity { .. })));
}
