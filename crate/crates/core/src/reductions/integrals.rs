use super::catalog::{catalog, CaseId, Reduction};
use super::{unary, y_sym, Method, ReductionError, ResidualReport, Result};
use crate::liesym::NonlinearityFamily;
use crate::odeint::{to_first_order, OdeSystem};
use crate::symexpr::{Env, Poly, Symbol};
use serde::Serialize;

/// A fifth-order ODE `expression = 0` obtained by integrating a flux-form
/// table row once in `y`.
#[derive(Clone, Debug, Serialize)]
pub struct FirstIntegral {
    pub id: String,
    #[serde(serialize_with = "display")]
    pub family: NonlinearityFamily,
    /// Left-hand side of `expression = 0`, in `y` and `v(y)`.
    #[serde(serialize_with = "display")]
    pub expression: Poly,
    /// Table row whose reduced ODE is recovered by differentiation.
    pub case: CaseId,
    pub row: usize,
    /// Parameter bindings that turn the table row into the differentiated form.
    pub row_bindings: Vec<(String, String)>,
    /// Similarity form of `u` this ODE describes.
    pub similarity: String,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(
    v: &T,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl FirstIntegral {
    /// First-order system with the remaining parameters bound from `params`.
    pub fn system(&self, params: &Env) -> Result<OdeSystem> {
        Ok(to_first_order(&self.expression, "v", &y_sym(), params)?)
    }

    /// The table row after substituting `row_bindings`.
    pub fn row(&self) -> Result<Reduction> {
        catalog(self.case)
            .into_iter()
            .find(|r| r.row == self.row)
            .ok_or_else(|| ReductionError::Unknown {
                kind: "row",
                name: format!("{}-{}", self.case, self.row),
            })
    }

    /// Differentiates the integral in `y` and compares with the table row's
    /// reduced ODE, up to the constant ratio of leading coefficients.
    pub fn check_derivative(&self) -> Result<ResidualReport> {
        let mut target = self.row()?.ode.residual(&self.family)?;
        for (name, value) in &self.row_bindings {
            target = target.subs(&Symbol::param(name), &super::p(value)?)?;
        }
        let d = self.expression.diff(&y_sym())?;
        let top = match unary("v", "y", 6).as_atom() {
            Some(a) => a.clone(),
            None => unreachable!(),
        };
        let ratio = d
            .coefficient(&top, 1)
            .checked_div(&target.coefficient(&top, 1))?;
        let diff = &d - &(&ratio * &target);
        let passed =
            ratio.is_constant() && !ratio.is_zero() && (diff.is_zero() || diff.is_zero_cleared());
        Ok(ResidualReport {
            id: self.id.clone(),
            passed,
            method: Method::Symbolic,
            max_residual: if passed { 0.0 } else { f64::INFINITY },
            points: 0,
            detail: if passed {
                format!(
                    "d/dy matches {}-{} with factor {ratio}",
                    self.case, self.row
                )
            } else {
                format!("ratio {ratio}; leftover {diff}")
            },
        })
    }
}

fn case_of(family: &NonlinearityFamily) -> (CaseId, usize) {
    match family {
        NonlinearityFamily::Exponential { .. } => (CaseId::Exponential, 6),
        NonlinearityFamily::Power { .. } => (CaseId::Power, 6),
        _ => (CaseId::Arbitrary, 4),
    }
}

fn v(k: u32) -> Poly {
    unary("v", "y", k)
}

/// `f(v) v_yyyyy + alpha v - k = 0` for travelling waves `u = v(x - alpha t)`.
pub fn first_integral_travelling(
    family: &NonlinearityFamily,
    alpha: &Poly,
    k: &Poly,
) -> Result<FirstIntegral> {
    family.validate()?;
    let (case, row) = case_of(family);
    let expression = &(&(&family.f_at(&v(0))? * &v(5)) + &(alpha * &v(0))) - k;
    Ok(FirstIntegral {
        id: format!("travelling-{}", family.label()),
        family: family.clone(),
        expression,
        case,
        row,
        row_bindings: vec![("alpha".into(), alpha.to_string())],
        similarity: "u = v(x - alpha*t)".into(),
    })
}

/// `v^m v_yyyyy + y v / (m + 6) - k = 0`, the source-type form
/// `u = t^(-1/(m+6)) v(x t^(-1/(m+6)))` of the power family. At `m = -6`
/// use [`first_integral_sink`].
pub fn first_integral_source(m: &Poly, k: &Poly) -> Result<FirstIntegral> {
    let m6 = m + &Poly::int(6);
    if m6.is_zero() {
        return Err(ReductionError::Inadmissible(
            "m = -6 has no source form; use the sink form".into(),
        ));
    }
    let family = NonlinearityFamily::power(m.clone())?;
    let alpha = m6.recip()?;
    let expression =
        &(&(&family.f_at(&v(0))? * &v(5)) + &(&(&alpha * &Poly::var("y")) * &v(0))) - k;
    Ok(FirstIntegral {
        id: "source".into(),
        family,
        expression,
        case: CaseId::Power,
        row: 4,
        row_bindings: vec![("alpha".into(), alpha.to_string())],
        similarity: format!("u = t^(-{alpha})*v(x*t^(-{alpha}))"),
    })
}

/// `v^(-6) v_yyyyy - alpha y v - k = 0` for `u = e^(alpha t) v(x e^(alpha t))`
/// with `f = u^(-6)`.
pub fn first_integral_sink(alpha: &Poly, k: &Poly) -> Result<FirstIntegral> {
    let family = NonlinearityFamily::power(Poly::int(-6))?;
    let expression = &(&(&family.f_at(&v(0))? * &v(5)) - &(&(alpha * &Poly::var("y")) * &v(0))) - k;
    Ok(FirstIntegral {
        id: "sink".into(),
        family,
        expression,
        case: CaseId::Power,
        row: 7,
        row_bindings: vec![
            ("m".into(), "-6".into()),
            ("alpha".into(), alpha.to_string()),
        ],
        similarity: "u = e^(alpha*t)*v(x*e^(alpha*t))".into(),
    })
}

/// The source form with `k = 0` divided by `v^m`:
/// `v_yyyyy + y v^(1 - m) / (m + 6) = 0`.
pub fn source_ode_k0(m: &Poly) -> Result<Poly> {
    let m6 = m + &Poly::int(6);
    if m6.is_zero() {
        return Err(ReductionError::Inadmissible(
            "m = -6 has no source form".into(),
        ));
    }
    let one_minus_m = &Poly::one() - m;
    let vpow = v(0).pow(&crate::symexpr::Exponent::from_poly(one_minus_m)?)?;
    Ok(&v(5) + (&(&Poly::var("y") * &vpow).checked_div(&m6)?))
}
