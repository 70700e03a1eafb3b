use super::{p, unary, y_sym, Method, ReductionError, ResidualReport, Result};
use crate::jetcalc::VectorField;
use crate::liesym::{classify, optimal_system, NonlinearityFamily};
use crate::symexpr::{check_zero, Atom, Env, Poly, SampleConfig, Symbol, ZeroVerdict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    Arbitrary,
    Exponential,
    Power,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Arbitrary, CaseId::Exponential, CaseId::Power];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "arbitrary" => Ok(CaseId::Arbitrary),
            "exponential" | "exp" => Ok(CaseId::Exponential),
            "power" => Ok(CaseId::Power),
            _ => Err(ReductionError::Unknown {
                kind: "case",
                name: s.into(),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Arbitrary => "arbitrary",
            CaseId::Exponential => "exponential",
            CaseId::Power => "power",
        }
    }

    /// The family with symbolic parameters.
    pub fn family(self) -> NonlinearityFamily {
        match self {
            CaseId::Arbitrary => NonlinearityFamily::Arbitrary,
            CaseId::Exponential => NonlinearityFamily::exponential_symbolic(),
            CaseId::Power => NonlinearityFamily::power_symbolic(),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reduced equation of a table row.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ReducedOde {
    /// `(f(v) v_yyyyy)_y = rhs`.
    Flux { rhs: String },
    /// `lhs = rhs`.
    Equation { lhs: String, rhs: String },
}

impl ReducedOde {
    /// Residual `lhs - rhs` as an expression in `v(y)`.
    pub fn residual(&self, family: &NonlinearityFamily) -> Result<Poly> {
        match self {
            ReducedOde::Flux { rhs } => {
                let flux = &family.f_at(&unary("v", "y", 0))? * &unary("v", "y", 5);
                Ok(&flux.diff(&y_sym())? - &p(rhs)?)
            }
            ReducedOde::Equation { lhs, rhs } => Ok(&p(lhs)? - &p(rhs)?),
        }
    }
}

impl fmt::Display for ReducedOde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReducedOde::Flux { rhs } => write!(f, "E = {rhs}"),
            ReducedOde::Equation { lhs, rhs } => write!(f, "{lhs} = {rhs}"),
        }
    }
}

/// One row of a reduction table.
#[derive(Clone, Debug, Serialize)]
pub struct Reduction {
    pub case: CaseId,
    pub row: usize,
    pub subalgebra: String,
    /// `u` in terms of `v(y)`, `t` and `x`.
    pub ansatz: String,
    /// `y` in terms of `t` and `x`.
    pub similarity: String,
    /// Variable eliminated in favour of `y`, and its expression.
    pub inverse: (String, String),
    pub ode: ReducedOde,
}

impl Reduction {
    pub fn id(&self) -> String {
        format!("{}-{}", self.case, self.row)
    }

    /// `u` with `v` applied to the similarity variable.
    pub fn ansatz_poly(&self) -> Result<Poly> {
        p(&self
            .ansatz
            .replace("v(y)", &format!("v({})", self.similarity)))
    }
}

fn row(
    case: CaseId,
    row: usize,
    sub: &str,
    ansatz: &str,
    y: &str,
    inverse: (&str, &str),
    ode: ReducedOde,
) -> Reduction {
    Reduction {
        case,
        row,
        subalgebra: sub.into(),
        ansatz: ansatz.into(),
        similarity: y.into(),
        inverse: (inverse.0.into(), inverse.1.into()),
        ode,
    }
}

fn flux(rhs: &str) -> ReducedOde {
    ReducedOde::Flux { rhs: rhs.into() }
}

fn eq(lhs: &str, rhs: &str) -> ReducedOde {
    ReducedOde::Equation {
        lhs: lhs.into(),
        rhs: rhs.into(),
    }
}

/// `prod_{k=-4}^{1} (6/m + k)` as text.
fn product_text() -> String {
    (-4..=1)
        .map(|k| format!("(6/m + ({k}))"))
        .collect::<Vec<_>>()
        .join("*")
}

/// The reduction table for one case, rows in table order.
pub fn catalog(case: CaseId) -> Vec<Reduction> {
    use CaseId::*;
    let t = ("t", "y");
    match case {
        Arbitrary => vec![
            row(Arbitrary, 1, "Q1", "v(y)", "x", ("x", "y"), flux("0")),
            row(Arbitrary, 2, "Q2", "v(y)", "t", t, eq("v_y", "0")),
            row(
                Arbitrary,
                3,
                "Q3",
                "v(y)",
                "x*t^(-1/6)",
                ("x", "y*t^(1/6)"),
                flux("-y*v_y/6"),
            ),
            row(
                Arbitrary,
                4,
                "Q1+alpha*Q2",
                "v(y)",
                "x - alpha*t",
                ("x", "y + alpha*t"),
                flux("-alpha*v_y"),
            ),
        ],
        Exponential => vec![
            row(Exponential, 1, "Q2", "v(y)", "x", ("x", "y"), flux("0")),
            row(
                Exponential,
                2,
                "Q3",
                "v(y) + (6/lambda)*ln(x)",
                "t",
                t,
                eq("144*e^(lambda*v) - lambda*v_y", "0"),
            ),
            row(Exponential, 3, "Q4", "v(y)", "t", t, eq("v_y", "0")),
            row(
                Exponential,
                4,
                "Q1+alpha*Q3",
                "v(y) + ((6*alpha - 1)/lambda)*ln(t)",
                "x*t^(-alpha)",
                ("x", "y*t^alpha"),
                flux("(6*alpha - 1)/lambda - alpha*y*v_y"),
            ),
            row(
                Exponential,
                5,
                "Q1+alpha*Q4",
                "v(y) - (1/lambda)*ln(t)",
                "x + alpha*ln(t)",
                ("x", "y - alpha*ln(t)"),
                flux("alpha*v_y - 1/lambda"),
            ),
            row(
                Exponential,
                6,
                "Q2+alpha*Q4",
                "v(y)",
                "x - alpha*t",
                ("x", "y + alpha*t"),
                flux("-alpha*v_y"),
            ),
            row(
                Exponential,
                7,
                "Q2+alpha*Q3",
                "v(y) - 6*alpha*t/lambda",
                "x*e^(alpha*t)",
                ("x", "y*e^(-alpha*t)"),
                flux("alpha*y*v_y - 6*alpha/lambda"),
            ),
        ],
        Power => vec![
            row(Power, 1, "Q2", "v(y)", "x", ("x", "y"), flux("0")),
            row(
                Power,
                2,
                "Q3",
                "v(y)*x^(6/m)",
                "t",
                t,
                eq(&format!("v^(m + 1)*{}", product_text()), "v_y"),
            ),
            row(Power, 3, "Q4", "v(y)", "t", t, eq("v_y", "0")),
            row(
                Power,
                4,
                "Q1+alpha*Q3",
                "v(y)*t^((6*alpha - 1)/m)",
                "x*t^(-alpha)",
                ("x", "y*t^alpha"),
                flux("((6*alpha - 1)/m)*v - alpha*y*v_y"),
            ),
            row(
                Power,
                5,
                "Q1+alpha*Q4",
                "v(y)*t^(-1/m)",
                "x + alpha*ln(t)",
                ("x", "y - alpha*ln(t)"),
                flux("alpha*v_y - (1/m)*v"),
            ),
            row(
                Power,
                6,
                "Q2+alpha*Q4",
                "v(y)",
                "x - alpha*t",
                ("x", "y + alpha*t"),
                flux("-alpha*v_y"),
            ),
            row(
                Power,
                7,
                "Q2+alpha*Q3",
                "v(y)*e^(-6*alpha*t/m)",
                "x*e^(alpha*t)",
                ("x", "y*e^(-alpha*t)"),
                flux("alpha*y*v_y - (6*alpha/m)*v"),
            ),
        ],
    }
}

/// `u_t - (f(u) u_xxxxx)_x` for an explicit `u(t, x)`.
pub(crate) fn pde_residual_of(u: &Poly, family: &NonlinearityFamily) -> Result<Poly> {
    let x = Symbol::x();
    let mut u5 = u.clone();
    for _ in 0..5 {
        u5 = u5.diff(&x)?;
    }
    if u5.is_zero() {
        // Flux vanishes whatever f(u) is; avoids forming 0^m.
        return Ok(u.diff(&Symbol::t())?);
    }
    let flux = &family.f_at(u)? * &u5;
    Ok(&u.diff(&Symbol::t())? - &flux.diff(&x)?)
}

/// Characteristic `phi - tau u_t - xi u_x` of `q` on the graph `u = a(t, x)`.
fn characteristic_on(q: &VectorField, a: &Poly) -> Result<Poly> {
    let on = |c: &Poly| -> Result<Poly> { Ok(c.subs(&Symbol::u(), a)?) };
    let tau = on(&q.tau)?;
    let xi = on(&q.xi)?;
    let phi = on(&q.phi)?;
    Ok(&phi - &(&(&tau * &a.diff(&Symbol::t())?) + &(&xi * &a.diff(&Symbol::x())?)))
}

fn highest_v(p: &Poly) -> Option<(u32, Atom)> {
    p.applications()
        .into_iter()
        .filter_map(|a| match &a {
            Atom::Apply { func, derivs, .. } if &**func == "v" => Some((derivs[0], a.clone())),
            _ => None,
        })
        .max_by_key(|(k, _)| *k)
}

/// [`verify_row_with`] with seed 42 and the default sampling configuration.
pub fn verify_row(r: &Reduction) -> Result<ResidualReport> {
    verify_row_with(
        r,
        &mut ChaCha8Rng::seed_from_u64(42),
        &SampleConfig::default(),
    )
}

/// Substitutes the ansatz into the equation, rewrites it in `(y, v(y))`, and
/// checks `PDE residual = multiplier * ODE residual`. The multiplier is the
/// ratio of the coefficients of the highest derivative of `v`. Also checks
/// that the ansatz is invariant under the row's generator.
pub fn verify_row_with(
    r: &Reduction,
    rng: &mut ChaCha8Rng,
    cfg: &SampleConfig,
) -> Result<ResidualReport> {
    let family = r.case.family();
    let u = r.ansatz_poly()?;
    let (var, expr) = (&r.inverse.0, p(&r.inverse.1)?);
    let pde = pde_residual_of(&u, &family)?.subs(&Symbol::var(var), &expr)?;
    let ode = r.ode.residual(&family)?;
    let id = r.id();
    let fail = |detail: String| ResidualReport {
        id: id.clone(),
        passed: false,
        method: Method::Symbolic,
        max_residual: f64::INFINITY,
        points: 0,
        detail,
    };
    let Some((k, top)) = highest_v(&ode) else {
        return Ok(fail(format!(
            "reduced equation `{}` has no derivative of v",
            r.ode
        )));
    };
    match highest_v(&pde) {
        Some((kp, _)) if kp == k => {}
        other => {
            return Ok(fail(format!(
                "PDE residual has highest derivative order {:?}, reduced equation has {k}",
                other.map(|o| o.0)
            )))
        }
    }
    let multiplier = pde
        .coefficient(&top, 1)
        .checked_div(&ode.coefficient(&top, 1))?;
    let diff = &pde - &(&multiplier * &ode);
    let verdict = check_zero(&diff, rng, cfg)?;
    let generator = generator_for(r)?;
    let invariant = characteristic_on(&generator, &r.ansatz_poly()?)?;
    let invariant_ok = invariant.is_zero() || invariant.is_zero_cleared();
    let multiplier_ok = nonvanishing(&multiplier, rng, cfg);
    let (method, max_residual, points) = match &verdict {
        ZeroVerdict::Symbolic => (Method::Symbolic, 0.0, 0),
        ZeroVerdict::Sampled { points, max_rel } => (Method::Sampled, *max_rel, *points),
        ZeroVerdict::Nonzero { max_rel, .. } => (Method::Sampled, *max_rel, cfg.points),
    };
    let mut detail = format!("multiplier {multiplier}");
    if let ZeroVerdict::Nonzero { leftover, .. } = &verdict {
        detail = format!("{detail}; leftover {leftover}");
    }
    if !invariant_ok {
        detail = format!("{detail}; ansatz not invariant under {generator}: {invariant}");
    }
    if !multiplier_ok {
        detail = format!("{detail}; multiplier vanishes at a sample point");
    }
    Ok(ResidualReport {
        id,
        passed: verdict.passed() && invariant_ok && multiplier_ok,
        method,
        max_residual,
        points,
        detail,
    })
}

fn nonvanishing(m: &Poly, rng: &mut ChaCha8Rng, cfg: &SampleConfig) -> bool {
    if m.is_zero() {
        return false;
    }
    (0..cfg.points).all(|_| {
        let env = crate::symexpr::sample_env(m, rng, cfg.lo, cfg.hi, &Env::new());
        m.eval(&env)
            .map(|v| v != 0.0 && v.is_finite())
            .unwrap_or(true)
    })
}

fn generator_for(r: &Reduction) -> Result<VectorField> {
    let case = classify(&r.case.family())?;
    optimal_system(&case)
        .into_iter()
        .find(|s| s.label == r.subalgebra)
        .map(|s| s.field)
        .ok_or_else(|| ReductionError::Unknown {
            kind: "subalgebra",
            name: r.subalgebra.clone(),
        })
}
