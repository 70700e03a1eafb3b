use std::path::PathBuf;
use std::process::{Command, Output};

fn thinfilm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinfilm"))
        .args(args)
        .env_remove("THINFILM_SEED")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("thinfilm-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON report on stdout")
}

#[test]
fn classify_power_family() {
    let out = thinfilm(&["classify", "power:m=3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("algebra: 2A_2"));
    assert!(text.contains("[Q3, Q4] = Q4"));
    assert!(text.contains("4/4 checks passed"));
}

#[test]
fn inadmissible_family_is_an_error() {
    let out = thinfilm(&["classify", "power:m=0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("inadmissible"));
}

#[test]
fn verify_suites_pass_and_report_json() {
    for scope in ["symmetries", "reductions", "solutions", "chains"] {
        let out = thinfilm(&["verify", scope, "--json", "-"]);
        assert!(out.status.success(), "{scope}");
        let json = report(&out);
        assert_eq!(json["command"], "verify");
        assert_eq!(json["outcome"], "pass");
        assert_eq!(json["seed"], 42);
        for key in ["inputs", "checks", "details", "version", "timestamp"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn check_counts() {
    let count = |args: &[&str]| {
        let dir = scratch(&args.join("-"));
        let path = dir.join("r.json");
        let mut full = args.to_vec();
        let p = path.to_str().unwrap();
        full.extend(["--json", p]);
        assert!(thinfilm(&full).status.success());
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        v["checks"].as_array().unwrap().len()
    };
    assert_eq!(count(&["verify", "symmetries"]), 11 + 18 + 3);
    assert_eq!(count(&["verify", "reductions"]), 18);
    assert_eq!(count(&["verify", "reductions", "--case", "exponential"]), 7);
    assert_eq!(count(&["verify", "solutions"]), 15 + 5);
}

#[test]
fn output_is_deterministic_apart_from_the_timestamp() {
    let strip = |out: Output| {
        let mut v = report(&out);
        v["timestamp"] = serde_json::Value::Null;
        v
    };
    let a = strip(thinfilm(&[
        "verify",
        "reductions",
        "--json",
        "-",
        "--seed",
        "7",
    ]));
    let b = strip(thinfilm(&[
        "verify",
        "reductions",
        "--json",
        "-",
        "--seed",
        "7",
    ]));
    assert_eq!(a, b);
    assert_eq!(a["seed"], 7);
}

#[test]
fn tolerance_override_can_fail_a_numeric_check() {
    let out = thinfilm(&["verify", "chains", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn csv_artifacts_are_written() {
    let dir = scratch("csv");
    let d = dir.to_str().unwrap();
    assert!(thinfilm(&["verify", "solutions", "--csv-dir", d])
        .status
        .success());
    let csv = std::fs::read_to_string(dir.join("solutions.csv")).unwrap();
    assert!(csv.starts_with("id,params,max_residual,n_points,pass\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn solution_profile_skips_points_outside_the_domain() {
    let out = thinfilm(&[
        "solution",
        "blowup_exp",
        "--param",
        "lambda=1",
        "--param",
        "x0=0",
        "--param",
        "t0=1",
        "--x-min",
        "-1",
        "--x-max",
        "1",
        "--n",
        "5",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,u");
    // x = 0 is the singular point.
    assert_eq!(lines.len(), 5);
    let at_half: Vec<f64> = lines
        .iter()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|v| v.parse().unwrap())
                .collect::<Vec<f64>>()
        })
        .find(|r| (r[0] - 0.5).abs() < 1e-12)
        .unwrap();
    assert!((at_half[1] + 9.128696).abs() < 1e-6);
}

#[test]
fn simulate_with_expectations() {
    let dir = scratch("sim");
    let cfg = dir.join("wt.json");
    std::fs::write(
        &cfg,
        r#"{"grid": {"x_min": 0.2, "x_max": 2.0, "n": 32},
            "boundary": {"kind": "exact", "solution": "waiting_time_power", "params": {"m": 1, "t0": 1}},
            "stepper": {"kind": "sdirk2", "dt": 0.02}, "t_end": 0.1,
            "expect": {"max_rel_l2_error": 1e-2}}"#,
    )
    .unwrap();
    let d = dir.to_str().unwrap();
    let out = thinfilm(&["simulate", cfg.to_str().unwrap(), "--csv-dir", d]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(std::fs::read_to_string(dir.join("timeseries.csv"))
        .unwrap()
        .starts_with("t,L2_error,Linf_error,mass\n"));
    assert_eq!(
        std::fs::read_to_string(dir.join("final.csv"))
            .unwrap()
            .lines()
            .count(),
        33
    );

    std::fs::write(
        &cfg,
        r#"{"grid": {"x_min": 0, "x_max": 1, "n": 32}, "bogus": 1}"#,
    )
    .unwrap();
    let out = thinfilm(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn catalog_is_json() {
    let out = thinfilm(&["catalog", "--case", "arbitrary"]);
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
}
