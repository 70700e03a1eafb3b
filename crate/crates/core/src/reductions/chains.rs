use super::{p, unary, y_sym, Method, ReductionError, ResidualReport, Result};
use crate::liesym::{nullspace, NonlinearityFamily};
use crate::odeint::{integrate, to_first_order, OdeSystem, Tolerances, Trajectory};
use crate::symexpr::{relative_value, Atom, Env, Poly, Rational, Symbol};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    /// Source form with `k = 0`, reduced by `y d_y + (6/m) v d_v`.
    SourceFourthOrder,
    /// Travelling-wave first integral, reduced by `d_y`.
    TravellingFourthOrder,
    /// Travelling waves of `f = u^m`, `m != 1`, `k = 0`, reduced twice.
    PowerThirdOrder,
    /// Travelling waves of `f = u e^(-u)`, `k = 0`, reduced twice.
    UExpThirdOrder,
}

impl ChainKind {
    pub const ALL: [ChainKind; 4] = [
        ChainKind::SourceFourthOrder,
        ChainKind::TravellingFourthOrder,
        ChainKind::PowerThirdOrder,
        ChainKind::UExpThirdOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChainKind::SourceFourthOrder => "source_fourth_order",
            ChainKind::TravellingFourthOrder => "travelling_fourth_order",
            ChainKind::PowerThirdOrder => "power_third_order",
            ChainKind::UExpThirdOrder => "uexp_third_order",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ReductionError::Unknown {
                kind: "chain",
                name: s.into(),
            })
    }
}

/// One change of variables: new independent and dependent variable in
/// terms of the previous ones.
#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub x: (String, String),
    pub u: (String, String),
}

/// A reduced ODE reduced again by one of its own symmetries.
#[derive(Clone, Debug, Serialize)]
pub struct ChainedReduction {
    pub kind: ChainKind,
    /// Table row the source ODE comes from.
    pub source_row: String,
    /// The fifth-order source ODE `source = 0`; `f(v)` is instantiated from the family.
    pub source: String,
    pub generator: String,
    pub stages: Vec<Stage>,
    /// Name of the final dependent variable and its independent variable.
    pub target_vars: (String, String),
    /// The target ODE `target = 0`, as printed.
    pub target: String,
    pub order: u32,
    pub note: Option<String>,
}

const TRAVELLING_FOURTH: &str = "f(x1)*(105*u1_x1^4 - 105*u1*u1_x1^2*u1_x1x1 + 10*u1^2*u1_x1x1^2 \
     + 15*u1^2*u1_x1*u1_x1x1x1 - u1^3*u1_x1x1x1x1) + alpha*x1*u1^9 - k*u1^9";

const SOURCE_FOURTH: &str = "-m^5*u1^3*u1_x1x1x1x1 \
     + 5*m^4*(3*m*u1_x1 + 2*m*u1^2 - 6*u1^2)*u1^2*u1_x1x1x1 \
     + 10*m^5*u1^2*u1_x1x1^2 \
     - 5*m^3*(21*m^2*u1_x1^2 + 20*m*(m - 3)*u1^2*u1_x1 + (7*m^2 - 48*m + 72)*u1^4)*u1*u1_x1x1 \
     + 105*m^5*u1_x1^4 \
     + 150*m^4*(m - 3)*u1^2*u1_x1^3 \
     + 15*m^3*(7*m^2 - 48*m + 72)*u1^4*u1_x1^2 \
     + 10*m^2*(m - 3)*(5*m^2 - 48*m + 72)*u1^6*u1_x1 \
     + (m^5*x1^(-m + 1)/(m + 6) + 72*(m - 2)*(m - 3)*(m - 6)*(2*m - 3)*x1)*u1^9 \
     + 12*m*(2*m^4 - 50*m^3 + 315*m^2 - 720*m + 540)*u1^8";

const POWER_THIRD: &str = "625*x2^3*u2^2*u2_x2x2x2 \
     - 125*(50*x2*u2_x2 + (11*m - 25)*x2*u2^2 + 75*u2)*x2^2*u2*u2_x2x2 \
     + 9375*x2^3*u2_x2^3 \
     + 125*(3*x2*u2*(11*m - 25) + 275)*x2^2*u2*u2_x2^2 \
     + 25*(125*(5*m - 12)*x2*u2 + (46*m^2 - 225*m + 250)*x2^2*u2^2 + 2625)*x2*u2^2*u2_x2 \
     + (24*m^4 + 875*m^2 - 250*m^3 - 1250*m + 625*alpha*x2^5 + 625)*x2^4*u2^7 \
     + 10*(48*m^3 - 375*m^2 + 875*m - 625)*x2^3*u2^6 \
     + 125*(38*m^2 - 195*m + 225)*x2^2*u2^5 \
     + 13125*(2*m - 5)*x2*u2^4 \
     + 65625*u2^3";

const UEXP_THIRD: &str = "x2^3*u2^2*u2_x2x2x2 \
     - x2^2*u2*(10*x2*u2_x2 + 11*u2^2*x2 + 15*u2)*u2_x2x2 \
     + 15*x2^3*u2_x2^3 \
     + 11*x2^2*u2*(5 + 3*x2*u2)*u2_x2^2 \
     + x2*u2^2*(46*x2^2*u2^2 + 125*x2*u2 + 105)*u2_x2 \
     + x2^4*(625*alpha*x2^5 + 24)*u2^7 \
     + 96*x2^3*u2^6 + 190*x2^2*u2^5 + 210*x2*u2^4 + 105*u2^3";

fn stage(x: (&str, &str), u: (&str, &str)) -> Stage {
    Stage {
        x: (x.0.into(), x.1.into()),
        u: (u.0.into(), u.1.into()),
    }
}

fn travelling_stage() -> Stage {
    stage(("x1", "v"), ("u1", "1/v_y"))
}

/// The chained reductions with their printed target ODEs.
pub fn chained_reductions() -> Vec<ChainedReduction> {
    vec![
        ChainedReduction {
            kind: ChainKind::SourceFourthOrder,
            source_row: "power-4".into(),
            source: "v_yyyyy + y*v^(1 - m)/(m + 6)".into(),
            generator: "y*d_y + (6/m)*v*d_v".into(),
            stages: vec![stage(
                ("x1", "v*y^(-6/m)"),
                ("u1", "y^(6/m)*(y*v_y - (6/m)*v)^(-1)"),
            )],
            target_vars: ("u1".into(), "x1".into()),
            target: SOURCE_FOURTH.into(),
            order: 4,
            note: None,
        },
        ChainedReduction {
            kind: ChainKind::TravellingFourthOrder,
            source_row: "arbitrary-4".into(),
            source: "f(v)*v_yyyyy + alpha*v - k".into(),
            generator: "d_y".into(),
            stages: vec![travelling_stage()],
            target_vars: ("u1".into(), "x1".into()),
            target: TRAVELLING_FOURTH.into(),
            order: 4,
            note: None,
        },
        ChainedReduction {
            kind: ChainKind::PowerThirdOrder,
            source_row: "power-6".into(),
            source: "v^m*v_yyyyy + alpha*v".into(),
            generator: "x1*d_x1 + ((m - 5)/5)*u1*d_u1".into(),
            stages: vec![
                travelling_stage(),
                stage(
                    ("x2", "u1*x1^((5 - m)/5)"),
                    ("u2", "x1^((m - 5)/5)*(x1*u1_x1 + ((5 - m)/5)*u1)^(-1)"),
                ),
            ],
            target_vars: ("u2".into(), "x2".into()),
            target: POWER_THIRD.into(),
            order: 3,
            note: None,
        },
        ChainedReduction {
            kind: ChainKind::UExpThirdOrder,
            source_row: "arbitrary-4".into(),
            source: "v*e^(-v)*v_yyyyy + alpha*v".into(),
            generator: "-5*d_x1 + u1*d_u1".into(),
            stages: vec![
                travelling_stage(),
                stage(
                    ("x2", "u1*e^(x1/5)"),
                    ("u2", "-(5*u1_x1 + u1)^(-1)*e^(-x1/5)"),
                ),
            ],
            target_vars: ("u2".into(), "x2".into()),
            target: UEXP_THIRD.into(),
            order: 3,
            note: Some(
                "u2 is printed with `u` where `u1` is meant; the corrected form is stored".into(),
            ),
        },
    ]
}

impl ChainedReduction {
    pub fn id(&self) -> &'static str {
        self.kind.name()
    }

    /// Source ODE with `f` instantiated from `family` (only used by the
    /// travelling-wave chain, whose source is written for arbitrary `f`).
    pub fn source_ode(&self, family: Option<&NonlinearityFamily>) -> Result<Poly> {
        instantiate_f(p(&self.source)?, family)
    }

    pub fn target_ode(&self, family: Option<&NonlinearityFamily>) -> Result<Poly> {
        instantiate_f(p(&self.target)?, family)
    }

    /// Final independent variable and the dependent variable with its
    /// derivatives up to `order`, as expressions in `y` and `v(y)`.
    pub fn composed(&self) -> Result<Vec<Poly>> {
        let y = y_sym();
        let mut x_expr = Poly::var("y");
        let mut u_derivs: Vec<Poly> = (0..=5).map(|k| unary("v", "y", k)).collect();
        let mut prev: (String, String) = ("v".into(), "y".into());
        for (i, st) in self.stages.iter().enumerate() {
            let last = i + 1 == self.stages.len();
            let need = if last { self.order as usize } else { 1 };
            let mut map = BTreeMap::new();
            for (k, d) in u_derivs.iter().enumerate() {
                if let Some(a) = unary(&prev.0, &prev.1, k as u32).as_atom() {
                    map.insert(a.clone(), d.clone());
                }
            }
            let bring = |text: &str| -> Result<Poly> {
                let e = p(text)?.subs_many(&map)?;
                if prev.1 == "y" {
                    Ok(e)
                } else {
                    Ok(e.subs(&Symbol::var(&prev.1), &x_expr)?)
                }
            };
            let new_x = bring(&st.x.1)?;
            let new_u = bring(&st.u.1)?;
            let dx = new_x.diff(&y)?;
            let mut derivs = vec![new_u];
            for _ in 0..need {
                let d = derivs
                    .last()
                    .expect("nonempty")
                    .diff(&y)?
                    .checked_div(&dx)?;
                derivs.push(d);
            }
            x_expr = new_x;
            u_derivs = derivs;
            prev = (st.u.0.clone(), st.x.0.clone());
        }
        let mut out = vec![x_expr];
        out.extend(u_derivs);
        Ok(out)
    }
}

fn instantiate_f(e: Poly, family: Option<&NonlinearityFamily>) -> Result<Poly> {
    match family {
        Some(fam) if !matches!(fam, NonlinearityFamily::Arbitrary) => {
            Ok(e.instantiate("f", &Symbol::u(), &fam.f_expr())?)
        }
        _ => Ok(e),
    }
}

/// Numerical data for one chain check.
#[derive(Clone, Debug, Serialize)]
pub struct ChainSetup {
    pub params: BTreeMap<String, f64>,
    /// Nonlinearity for chains whose source ODE contains `f`.
    #[serde(skip)]
    pub family: Option<NonlinearityFamily>,
    pub y0: f64,
    /// `(v, v', v'', v''', v'''')` at `y0`.
    pub state0: [f64; 5],
    pub y_end: f64,
}

impl ChainSetup {
    fn new(
        params: &[(&str, f64)],
        family: Option<NonlinearityFamily>,
        y0: f64,
        state0: [f64; 5],
        y_end: f64,
    ) -> Self {
        ChainSetup {
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            family,
            y0,
            state0,
            y_end,
        }
    }

    /// Default data: generic initial values on an interval where the
    /// changes of variables are nonsingular.
    pub fn defaults(kind: ChainKind) -> Vec<ChainSetup> {
        let lam = |l: f64| {
            Some(
                NonlinearityFamily::exponential(Poly::constant(
                    Rational::from_float(l).expect("finite"),
                ))
                .expect("lambda"),
            )
        };
        let pow = |m: i64| Some(NonlinearityFamily::power(Poly::int(m)).expect("m"));
        let state = [1.0, 0.5, -0.2, 0.1, 0.05];
        match kind {
            ChainKind::SourceFourthOrder => vec![
                ChainSetup::new(&[("m", 2.0)], None, 1.0, [1.0, 0.3, -0.2, 0.1, 0.05], 1.6),
                ChainSetup::new(&[("m", -1.0)], None, 1.0, [1.0, 0.3, -0.2, 0.1, 0.05], 1.6),
            ],
            ChainKind::TravellingFourthOrder => vec![
                ChainSetup::new(
                    &[("alpha", 1.0), ("k", 0.0)],
                    lam(1.0),
                    0.0,
                    [0.5, 1.0, -0.2, 0.1, 0.05],
                    0.6,
                ),
                ChainSetup::new(&[("alpha", 1.0), ("k", 0.5)], pow(2), 0.0, state, 0.6),
            ],
            ChainKind::PowerThirdOrder => vec![
                ChainSetup::new(&[("m", 2.0), ("alpha", 1.0)], None, 0.0, state, 0.6),
                ChainSetup::new(&[("m", 3.0), ("alpha", -0.5)], None, 0.0, state, 0.6),
            ],
            ChainKind::UExpThirdOrder => {
                vec![ChainSetup::new(&[("alpha", 1.0)], None, 0.0, state, 0.6)]
            }
        }
    }

    fn env(&self) -> Env {
        let mut env = Env::new();
        for (k, v) in &self.params {
            env.set(Symbol::param(k), *v);
        }
        env
    }
}

/// Outcome of a chain check, with the adjudication finding on failure.
#[derive(Clone, Debug, Serialize)]
pub struct ChainOutcome {
    pub report: ResidualReport,
    /// Largest relative residual at random jets satisfying the source ODE.
    pub jet_residual: f64,
    /// Set when the printed target ODE is not satisfied.
    pub finding: Option<String>,
}

/// Relative tolerance for the chain residuals.
pub const CHAIN_TOLERANCE: f64 = 1e-6;

struct Evaluator {
    composed: Vec<Poly>,
    target: Poly,
    target_atoms: Vec<Atom>,
    target_x: Symbol,
    system: OdeSystem,
    base: Env,
}

impl Evaluator {
    fn new(chain: &ChainedReduction, setup: &ChainSetup) -> Result<Self> {
        let base = setup.env();
        let source = chain.source_ode(setup.family.as_ref())?;
        let system = to_first_order(&source, "v", &y_sym(), &base)?;
        let composed = chain.composed()?;
        let target = chain.target_ode(setup.family.as_ref())?;
        let (u, x) = &chain.target_vars;
        let target_atoms = (0..=chain.order)
            .map(|k| unary(u, x, k).as_atom().cloned().expect("atom"))
            .collect();
        Ok(Evaluator {
            composed,
            target,
            target_atoms,
            target_x: Symbol::var(x),
            system,
            base,
        })
    }

    /// Relative residual of the target at the jet `(y, v, .., v'''')`.
    fn residual(&self, y: f64, state: &[f64]) -> Result<f64> {
        let v5 = self.system.eval(y, state)[4];
        let mut env = self.base.clone();
        env.set(y_sym(), y);
        for (k, val) in state.iter().chain(std::iter::once(&v5)).enumerate() {
            env.atoms.insert(
                unary("v", "y", k as u32).as_atom().cloned().expect("atom"),
                *val,
            );
        }
        let values: Vec<f64> = self
            .composed
            .iter()
            .map(|e| e.eval(&env))
            .collect::<std::result::Result<_, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ReductionError::Inadmissible(format!(
                "change of variables is singular at y = {y}"
            )));
        }
        let mut tenv = self.base.clone();
        tenv.set(self.target_x.clone(), values[0]);
        for (a, val) in self.target_atoms.iter().zip(&values[1..]) {
            tenv.atoms.insert(a.clone(), *val);
        }
        Ok(relative_value(&self.target, &tenv)?)
    }
}

/// Integrates the source ODE, pushes the trajectory through the changes of
/// variables (derivatives by the chain rule, with `v'''''` from the source
/// ODE) and evaluates the printed target ODE at every step. The same
/// residual is also evaluated at random jets on the source ODE.
pub fn verify_chain(
    chain: &ChainedReduction,
    setup: &ChainSetup,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutcome> {
    let ev = Evaluator::new(chain, setup)?;
    let tol = Tolerances {
        rtol: 1e-11,
        atol: 1e-13,
        ..Tolerances::default()
    };
    let traj = integrate(&ev.system, setup.y0, &setup.state0, setup.y_end, &tol)?;
    let mut worst: f64 = 0.0;
    for (y, s) in traj.ys.iter().zip(&traj.states) {
        worst = worst.max(ev.residual(*y, s)?);
    }
    let mut jet_worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < 20 && attempts < 400 {
        attempts += 1;
        let y = rng.gen_range(0.5..1.5);
        let mut s = [0.0; 5];
        s[0] = rng.gen_range(0.5..2.0);
        for v in &mut s[1..] {
            *v = rng.gen_range(-2.0..2.0);
        }
        if ev.system.is_singular(y, &s) {
            continue;
        }
        if let Ok(r) = ev.residual(y, &s) {
            jet_worst = jet_worst.max(r);
            done += 1;
        }
    }
    if done == 0 {
        return Err(ReductionError::NoSamples(chain.id().into()));
    }
    let passed = worst < CHAIN_TOLERANCE && jet_worst < CHAIN_TOLERANCE;
    let params: Vec<String> = setup
        .params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    let label = setup
        .family
        .as_ref()
        .map(|f| format!(",{}", f.label()))
        .unwrap_or_default();
    let finding = (!passed).then(|| {
        format!(
            "possible transcription error: the printed {} ODE `{}` is not satisfied by solutions of `{} = 0` \
             (trajectory residual {worst:.3e}, random-jet residual {jet_worst:.3e})",
            chain.id(),
            chain.target,
            chain.source
        )
    });
    Ok(ChainOutcome {
        report: ResidualReport {
            id: format!("{}[{}{label}]", chain.id(), params.join(",")),
            passed,
            method: Method::Numeric,
            max_residual: worst.max(jet_worst),
            points: traj.ys.len() + done,
            detail: format!(
                "{} steps on [{}, {}]",
                traj.ys.len(),
                setup.y0,
                traj.y_last()
            ),
        },
        jet_residual: jet_worst,
        finding,
    })
}

/// Pushes the rational travelling wave `v = -(alpha/120) y^5 + sum c_i y^i`
/// (`f = u`, `k = 0`) through `x1 = v`, `u1 = 1/v_y` and evaluates the
/// relative residual of the travelling-wave fourth-order ODE.
pub fn verify_chain_closed_form(alpha: f64, c: [f64; 5], ys: &[f64]) -> Result<ResidualReport> {
    let chain = chained_reductions().remove(1);
    let setup = ChainSetup::new(
        &[("alpha", alpha), ("k", 0.0)],
        Some(NonlinearityFamily::power(Poly::one())?),
        0.0,
        [0.0; 5],
        0.0,
    );
    let ev = Evaluator::new(&chain, &setup)?;
    let mut worst: f64 = 0.0;
    for &y in ys {
        let mut d = [0.0; 6];
        // Derivatives of the quintic, highest term first.
        let coef = [c[0], c[1], c[2], c[3], c[4], -alpha / 120.0];
        for (k, slot) in d.iter_mut().enumerate() {
            *slot = (k..6)
                .map(|i| coef[i] * falling(i, k) * y.powi((i - k) as i32))
                .sum();
        }
        worst = worst.max(ev.residual(y, &d[..5])?);
    }
    Ok(ResidualReport {
        id: format!("rational_tw_m1->{}", chain.id()),
        passed: worst < 1e-8,
        method: Method::Numeric,
        max_residual: worst,
        points: ys.len(),
        detail: format!("alpha={alpha}, c={c:?}"),
    })
}

fn falling(i: usize, k: usize) -> f64 {
    (0..k).map(|j| (i - j) as f64).product()
}

/// Integrates the source form `v^m v_yyyyy + y v / (m + 6) = k` from `y0`.
pub fn integrate_source(
    m: f64,
    k: f64,
    y0: f64,
    state0: &[f64; 5],
    y_end: f64,
    tol: &Tolerances,
) -> Result<Trajectory> {
    let fi = super::first_integral_source(&Poly::constant(exact(m)?), &Poly::constant(exact(k)?))?;
    let sys = fi.system(&Env::new())?;
    Ok(integrate(&sys, y0, state0, y_end, tol)?)
}

fn exact(v: f64) -> Result<Rational> {
    Rational::from_float(v)
        .ok_or_else(|| ReductionError::Inadmissible(format!("{v} is not finite")))
}

/// The symmetry condition for the travelling-wave fourth-order ODE with
/// `xi = a x1 + b`, `phi = c u1`.
pub const FOURTH_ORDER_CONDITION: &str = "(5*(a + c)*alpha*x1 + b*alpha - (4*a + 5*c)*k)*f(x1) \
     + (-a*alpha*x1^2 + (a*k - b*alpha)*x1 + k*b)*df1(x1)";

/// One branch of the case split of [`FOURTH_ORDER_CONDITION`].
#[derive(Clone, Debug, Serialize)]
pub struct FourthOrderSymmetryCase {
    pub label: String,
    #[serde(skip)]
    pub family: NonlinearityFamily,
    /// Bindings of `k` (and `m`) defining the branch.
    pub conditions: Vec<(String, String)>,
    /// Claimed `(xi, phi)`, or `None` when only the trivial solution exists.
    pub claimed: Option<(String, String)>,
    /// Dimension of the solution space in `(a, b, c)`.
    pub dimension: usize,
}

pub fn fourth_order_symmetry_cases() -> Vec<FourthOrderSymmetryCase> {
    let case = |label: &str,
                family: NonlinearityFamily,
                cond: &[(&str, &str)],
                claimed: Option<(&str, &str)>| {
        let dimension = match claimed {
            None => 0,
            Some((xi, _)) => xi.matches(['a', 'b', 'c']).count(),
        };
        FourthOrderSymmetryCase {
            label: label.into(),
            family,
            conditions: cond
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            claimed: claimed.map(|(a, b)| (a.into(), b.into())),
            dimension,
        }
    };
    vec![
        case(
            "exponential",
            NonlinearityFamily::exponential_symbolic(),
            &[],
            None,
        ),
        case(
            "power (i) k != 0",
            NonlinearityFamily::power_symbolic(),
            &[],
            None,
        ),
        case(
            "power (ii) k = 0, m = 1",
            NonlinearityFamily::power(Poly::one()).expect("m"),
            &[("k", "0")],
            Some(("a*x1 + b", "-(4/5)*a*u1")),
        ),
        case(
            "power (iii) k = 0, m != 1",
            NonlinearityFamily::power_symbolic(),
            &[("k", "0")],
            Some(("a*x1", "((m - 5)/5)*a*u1")),
        ),
        case(
            "u*e^(-u), k = 0",
            NonlinearityFamily::Explicit {
                f: p("u*e^(-u)").expect("literal"),
            },
            &[("k", "0")],
            Some(("-5*c", "c*u1")),
        ),
    ]
}

impl FourthOrderSymmetryCase {
    /// The condition of [`FOURTH_ORDER_CONDITION`] for this family and branch.
    fn condition(&self) -> Result<Poly> {
        let f = self.family.f_expr();
        let mut s = p(FOURTH_ORDER_CONDITION)?;
        s = s.instantiate("f", &Symbol::u(), &f)?.instantiate(
            "df1",
            &Symbol::u(),
            &f.diff(&Symbol::u())?,
        )?;
        for (k, v) in &self.conditions {
            s = s.subs(&Symbol::param(k), &p(v)?)?;
        }
        Ok(s)
    }

    /// Checks the branch: the claimed generator satisfies the condition, and
    /// the solution space in `(a, b, c)` at random parameter values has the
    /// claimed dimension (0 for trivial branches).
    pub fn verify(&self, rng: &mut ChaCha8Rng) -> Result<ResidualReport> {
        let cond = self.condition()?;
        let mut ok = true;
        let mut detail = Vec::new();
        if let Some((xi, phi)) = &self.claimed {
            // Read (a, b, c) off the claimed xi = a' x1 + b', phi = c' u1.
            let xi = p(xi)?;
            // `u1` alone would parse as the function u1(x1); use a plain variable.
            let phi = p(&phi.replace("u1", "s"))?;
            let x1 = Symbol::var("x1");
            let a = xi.diff(&x1)?;
            let b = xi.subs(&x1, &Poly::zero())?;
            let c = phi.diff(&Symbol::var("s"))?;
            let mut map = BTreeMap::new();
            for (name, val) in [("a", a), ("b", b), ("c", c)] {
                map.insert(Symbol::param(name), val);
            }
            let fresh = [("a", "eps4"), ("b", "eps5"), ("c", "eps6")];
            let mut inst = cond.clone();
            for (name, tmp) in fresh {
                inst = inst.subs(&Symbol::param(name), &Poly::param(tmp))?;
            }
            for (name, tmp) in fresh {
                inst = inst.subs(&Symbol::param(tmp), &map[&Symbol::param(name)])?;
            }
            let zero = inst.is_zero() || inst.is_zero_cleared();
            detail.push(format!(
                "claimed generator {}",
                if zero {
                    "satisfies the condition"
                } else {
                    "fails"
                }
            ));
            ok &= zero;
        }
        let dim = self.solution_dimension(&cond, rng)?;
        let expected = self.dimension;
        detail.push(format!(
            "solution space dimension {dim} (expected {expected})"
        ));
        ok &= dim == expected;
        Ok(ResidualReport {
            id: format!("fourth-order symmetries: {}", self.label),
            passed: ok,
            method: Method::Symbolic,
            max_residual: if ok { 0.0 } else { f64::INFINITY },
            points: 0,
            detail: detail.join("; "),
        })
    }

    /// Dimension of the space of `(a, b, c)` solving the condition
    /// identically in `x1`, with the remaining parameters at random rationals.
    fn solution_dimension(&self, cond: &Poly, rng: &mut ChaCha8Rng) -> Result<usize> {
        let unknowns = ["a", "b", "c"];
        let mut s = cond.clone();
        let fixed: BTreeSet<Symbol> = s
            .free_symbols()
            .into_iter()
            .filter(|sym| {
                matches!(sym, Symbol::Param(_)) && !unknowns.contains(&sym.name().as_str())
            })
            .collect();
        for sym in fixed {
            let r = Rational::new(
                rng.gen_range(-40i64..40).into(),
                rng.gen_range(1i64..9).into(),
            );
            let r = if r == Rational::from_integer(0.into()) {
                Rational::from_integer(3.into())
            } else {
                r
            };
            s = s.subs(&sym, &Poly::constant(r))?;
        }
        // Rows: coefficient of every monomial in x1 and transcendental atoms.
        let cols: Vec<Poly> = unknowns
            .iter()
            .map(|u| {
                let mut q = s.clone();
                for w in unknowns {
                    q = q
                        .subs(&Symbol::param(w), &Poly::int(if w == *u { 1 } else { 0 }))
                        .expect("linear");
                }
                q
            })
            .collect();
        let mut rows: BTreeMap<String, Vec<Rational>> = BTreeMap::new();
        for (j, col) in cols.iter().enumerate() {
            for (m, coeff) in col.terms() {
                rows.entry(m.to_poly().to_string())
                    .or_insert_with(|| vec![Rational::from_integer(0.into()); 3])[j] =
                    coeff.clone();
            }
        }
        let matrix: Vec<Vec<Rational>> = rows.into_values().collect();
        Ok(nullspace(matrix, 3).len())
    }
}

/// Rederives the last line of [`FOURTH_ORDER_CONDITION`] from the travelling-wave
/// fourth-order ODE: applies the prolonged generator
/// `(a x1 + b) d_x1 + c u1 d_u1` to the ODE, restricts to its solutions and
/// checks that the result vanishes exactly when the condition does.
pub fn derive_fourth_order_condition() -> Result<ResidualReport> {
    let x1 = Symbol::var("x1");
    let eq = p(TRAVELLING_FOURTH)?;
    let w = |k: usize| Symbol::var(&format!("w{k}"));
    let atom = |k: u32| unary("u1", "x1", k).as_atom().cloned().expect("atom");
    // Jet coordinates of u1 as plain variables, so partial derivatives are available.
    let to_jet = |e: &Poly| -> Result<Poly> {
        let mut out = e.clone();
        for k in 0..=4u32 {
            out = out.subs_atom(&atom(k), &Poly::symbol(w(k as usize)))?;
        }
        Ok(out)
    };
    let xi = p("a*x1 + b")?;
    let char_q = &(&Poly::param("c") * &unary("u1", "x1", 0)) - &(&xi * &unary("u1", "x1", 1));
    let e_jet = to_jet(&eq)?;
    let mut pr = &xi * &e_jet.diff(&x1)?;
    let mut dq = char_q;
    for k in 0..=4usize {
        let phi_k = &dq + &(&xi * &unary("u1", "x1", k as u32 + 1));
        pr = &pr + &(&to_jet(&phi_k)? * &e_jet.diff(&w(k))?);
        dq = dq.diff(&x1)?;
    }
    // On solutions: eliminate the fourth derivative.
    let lead = e_jet.coefficient(&Atom::Sym(w(4)), 1);
    let rest = e_jet.coefficient(&Atom::Sym(w(4)), 0);
    let w4 = (-&rest).checked_div(&lead)?;
    let on = pr.subs(&w(4), &w4)?;
    // Condition P f + Q f' = 0 solved for f'.
    let cond = p(FOURTH_ORDER_CONDITION)?;
    let df_atom = p("df1(x1)")?.as_atom().cloned().expect("atom");
    let q = cond.coefficient(&df_atom, 1);
    let pf = cond.coefficient(&df_atom, 0);
    let on_cond = on.subs_atom(&df_atom, &(-&pf).checked_div(&q)?)?;
    let vanishes = on_cond.is_zero() || on_cond.is_zero_cleared();
    let nontrivial = !(on.is_zero() || on.is_zero_cleared());
    Ok(ResidualReport {
        id: "fourth-order symmetries: derived from the fourth-order ODE".into(),
        passed: vanishes && nontrivial,
        method: Method::Symbolic,
        max_residual: if vanishes { 0.0 } else { f64::INFINITY },
        points: 0,
        detail: format!(
            "invariance condition {} on the condition line; {}",
            if vanishes {
                "vanishes"
            } else {
                "does not vanish"
            },
            if nontrivial {
                "nonzero otherwise"
            } else {
                "identically zero"
            }
        ),
    })
}
