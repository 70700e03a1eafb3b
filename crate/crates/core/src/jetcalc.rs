//! Jet-space calculus for `u_t = (f(u) u_xxxxx)_x`: total derivatives,
//! prolongation of point vector fields and the invariance criterion on the
//! solution manifold.

use crate::symexpr::{Atom, Monomial, Poly, SymError, Symbol, MAX_JET_ORDER};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("jet order overflow: {jet} exceeds order {max}")]
    Overflow { jet: String, max: u32 },
    #[error("prolongation order {0} is not supported (maximum 6)")]
    OrderTooHigh(u32),
    #[error("coefficient `{0}` of a point vector field contains derivatives of u")]
    NotPointField(String),
}

pub type Result<T> = std::result::Result<T, JetError>;

/// Highest prolongation order needed by the equation.
pub const MAX_PROLONGATION: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    T,
    X,
}

impl Dir {
    fn symbol(self) -> Symbol {
        match self {
            Dir::T => Symbol::t(),
            Dir::X => Symbol::x(),
        }
    }

    fn raise(self, t: u32, x: u32) -> (u32, u32) {
        match self {
            Dir::T => (t + 1, x),
            Dir::X => (t, x + 1),
        }
    }
}

/// `Q = tau d_t + xi d_x + phi d_u (+ psi d_f)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorField {
    pub tau: Poly,
    pub xi: Poly,
    pub phi: Poly,
    /// Coefficient of `d_f`, only for operators on the extended space `(t, x, u, f)`.
    pub psi: Option<Poly>,
}

impl VectorField {
    pub fn new(tau: Poly, xi: Poly, phi: Poly) -> Self {
        VectorField {
            tau,
            xi,
            phi,
            psi: None,
        }
    }

    pub fn with_psi(mut self, psi: Poly) -> Self {
        self.psi = Some(psi);
        self
    }

    /// Parses the three coefficients.
    pub fn parse(tau: &str, xi: &str, phi: &str) -> std::result::Result<Self, SymError> {
        Ok(VectorField::new(
            crate::symexpr::poly(tau)?,
            crate::symexpr::poly(xi)?,
            crate::symexpr::poly(phi)?,
        ))
    }

    pub fn zero() -> Self {
        VectorField::new(Poly::zero(), Poly::zero(), Poly::zero())
    }

    /// The general point field with opaque coefficient functions.
    pub fn opaque() -> Self {
        let p = |s: &str| crate::symexpr::poly(s).expect("coefficient function");
        VectorField::new(p("tau"), p("xi"), p("phi"))
    }

    pub fn is_zero(&self) -> bool {
        self.tau.is_zero()
            && self.xi.is_zero()
            && self.phi.is_zero()
            && self.psi.as_ref().is_none_or(Poly::is_zero)
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        let psi = match (&self.psi, &other.psi) {
            (None, None) => None,
            (a, b) => Some(a.clone().unwrap_or_default() + b.clone().unwrap_or_default()),
        };
        VectorField {
            tau: &self.tau + &other.tau,
            xi: &self.xi + &other.xi,
            phi: &self.phi + &other.phi,
            psi,
        }
    }

    pub fn scale(&self, k: &Poly) -> VectorField {
        VectorField {
            tau: &self.tau * k,
            xi: &self.xi * k,
            phi: &self.phi * k,
            psi: self.psi.as_ref().map(|p| p * k),
        }
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.add(&other.scale(&Poly::int(-1)))
    }

    pub fn coefficients(&self) -> Vec<&Poly> {
        let mut v = vec![&self.tau, &self.xi, &self.phi];
        if let Some(p) = &self.psi {
            v.push(p);
        }
        v
    }

    /// Checks that no coefficient depends on derivatives of `u`.
    pub fn check_point(&self) -> Result<()> {
        for c in self.coefficients() {
            let has_jet = c
                .free_symbols()
                .iter()
                .any(|s| matches!(s, Symbol::Jet { t, x } if t + x > 0));
            if has_jet {
                return Err(JetError::NotPointField(c.to_string()));
            }
        }
        Ok(())
    }

    /// Applies the field as a derivation to a function of `(t, x, u[, f])`.
    pub fn apply_to(&self, g: &Poly) -> std::result::Result<Poly, SymError> {
        let mut out = &self.tau * &g.diff(&Symbol::t())?;
        out = out + &self.xi * &g.diff(&Symbol::x())?;
        out = out + &self.phi * &g.diff(&Symbol::u())?;
        if let Some(psi) = &self.psi {
            out = out + psi * &g.diff(&Symbol::var("f"))?;
        }
        Ok(out)
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        let mut push = |c: &Poly, d: &str| {
            if c.is_zero() {
                return;
            }
            let s = c.to_string();
            if s == "1" {
                parts.push(d.to_string());
            } else if c.len() > 1 {
                parts.push(format!("({s})*{d}"));
            } else {
                parts.push(format!("{s}*{d}"));
            }
        };
        push(&self.tau, "d_t");
        push(&self.xi, "d_x");
        push(&self.phi, "d_u");
        if let Some(psi) = &self.psi {
            push(psi, "d_f");
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

impl Serialize for VectorField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("VectorField", 5)?;
        st.serialize_field("tau", &self.tau.to_string())?;
        st.serialize_field("xi", &self.xi.to_string())?;
        st.serialize_field("phi", &self.phi.to_string())?;
        st.serialize_field("psi", &self.psi.as_ref().map(|p| p.to_string()))?;
        st.serialize_field("operator", &self.to_string())?;
        st.end()
    }
}

fn jet_name(t: u32, x: u32) -> String {
    Symbol::jet(t, x).to_string()
}

/// Total derivative `D_t` or `D_x`: the partial derivative plus one chain
/// term per jet variable present.
pub fn total_derivative(e: &Poly, dir: Dir) -> Result<Poly> {
    let mut out = e.diff(&dir.symbol())?;
    for s in e.free_symbols() {
        if let Symbol::Jet { t, x } = s {
            let d = e.diff(&s)?;
            if d.is_zero() {
                continue;
            }
            let (nt, nx) = dir.raise(t, x);
            if nt + nx > MAX_JET_ORDER {
                return Err(JetError::Overflow {
                    jet: jet_name(nt, nx),
                    max: MAX_JET_ORDER,
                });
            }
            out = out + &d * &Poly::jet(nt, nx);
        }
    }
    Ok(out)
}

/// Multi-index of a prolongation coefficient: `t_order` derivatives in `t`
/// and `x_order` in `x`.
pub type MultiIndex = (u32, u32);

/// Prolongation coefficients `phi^J = D_J(phi - tau u_t - xi u_x) + tau u_{J t} + xi u_{J x}`
/// for `J = t` and `J = x^k`, `1 <= k <= order`.
pub fn prolong(q: &VectorField, order: u32) -> Result<BTreeMap<MultiIndex, Poly>> {
    if order > MAX_PROLONGATION {
        return Err(JetError::OrderTooHigh(order));
    }
    q.check_point()?;
    let w = characteristic(q);
    let mut out = BTreeMap::new();
    if order >= 1 {
        let dt = total_derivative(&w, Dir::T)?;
        out.insert(
            (1, 0),
            dt + &q.tau * &Poly::jet(2, 0) + &q.xi * &Poly::jet(1, 1),
        );
    }
    let mut dw = w;
    for k in 1..=order {
        dw = total_derivative(&dw, Dir::X)?;
        let c = &dw + &(&q.tau * &Poly::jet(1, k)) + &q.xi * &Poly::jet(0, k + 1);
        out.insert((0, k), c);
    }
    Ok(out)
}

/// `phi - tau u_t - xi u_x`.
pub fn characteristic(q: &VectorField) -> Poly {
    &q.phi - &(&(&q.tau * &Poly::jet(1, 0)) + &(&q.xi * &Poly::jet(0, 1)))
}

/// `(f(u) u_xxxxx)_x` expanded, with `f` given as an expression in `u`.
pub fn flux_rhs(f: &Poly) -> Result<Poly> {
    let f1 = f.diff(&Symbol::u())?;
    Ok(&(&f1 * &Poly::jet(0, 1)) * &Poly::jet(0, 5) + f * &Poly::jet(0, 6))
}

/// Left side minus right side of the expanded criterion, before restricting
/// to solutions: `phi^t - [phi f'' u_x u_5 + f' u_5 phi^x + f' u_x phi^5 + phi f' u_6 + f phi^6]`.
pub fn criterion(q: &VectorField, f: &Poly) -> Result<Poly> {
    let pr = prolong(q, MAX_PROLONGATION)?;
    let u = Symbol::u();
    let f1 = f.diff(&u)?;
    let f2 = f1.diff(&u)?;
    let (ux, u5, u6) = (Poly::jet(0, 1), Poly::jet(0, 5), Poly::jet(0, 6));
    let mut rhs = &(&(&q.phi * &f2) * &ux) * &u5;
    rhs = rhs + &(&f1 * &u5) * &pr[&(0, 1)];
    rhs = rhs + &(&f1 * &ux) * &pr[&(0, 5)];
    rhs = rhs + &(&q.phi * &f1) * &u6;
    rhs = rhs + f * &pr[&(0, 6)];
    Ok(&pr[&(1, 0)] - &rhs)
}

/// Replaces `u_t` by the right-hand side of the equation.
pub fn on_solutions(e: &Poly, f: &Poly) -> Result<Poly> {
    Ok(e.subs(&Symbol::jet(1, 0), &flux_rhs(f)?)?)
}

/// Criterion restricted to the solution manifold. `u_t` is eliminated, and
/// so is `u_tx` (its replacement stays within order 7); any other mixed jet
/// left with a nonzero coefficient is reported as an overflow.
pub fn invariance_residual(q: &VectorField, f: &Poly) -> Result<Poly> {
    let c = criterion(q, f)?;
    let rhs = flux_rhs(f)?;
    let mut map = BTreeMap::new();
    map.insert(Atom::Sym(Symbol::jet(1, 0)), rhs.clone());
    map.insert(
        Atom::Sym(Symbol::jet(1, 1)),
        total_derivative(&rhs, Dir::X)?,
    );
    let r = c.subs_many(&map)?;
    for s in r.free_symbols() {
        if let Symbol::Jet { t, x } = s {
            if t > 0 {
                return Err(JetError::Overflow {
                    jet: jet_name(t, x),
                    max: MAX_JET_ORDER,
                });
            }
        }
    }
    Ok(r)
}

/// One determining equation: the coefficient of a jet monomial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeterminingEquation {
    pub monomial: String,
    #[serde(serialize_with = "ser_poly")]
    pub coefficient: Poly,
}

fn ser_poly<S: serde::Serializer>(p: &Poly, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&p.to_string())
}

fn is_positive_jet(a: &Atom) -> bool {
    matches!(a, Atom::Sym(Symbol::Jet { t, x }) if t + x > 0)
}

/// Coefficients of the independent jet monomials in the criterion after
/// `u_t` elimination. Mixed jets are kept as independent coordinates.
pub fn extract_determining_system(q: &VectorField, f: &Poly) -> Result<Vec<DeterminingEquation>> {
    let c = on_solutions(&criterion(q, f)?, f)?;
    Ok(collect_jets(&c))
}

/// Groups `e` by monomials in the positive-order jet variables.
pub fn collect_jets(e: &Poly) -> Vec<DeterminingEquation> {
    e.collect(is_positive_jet)
        .into_iter()
        .map(|(m, coefficient)| DeterminingEquation {
            monomial: monomial_name(&m),
            coefficient,
        })
        .collect()
}

fn monomial_name(m: &Monomial) -> String {
    if m.is_one() {
        "1".into()
    } else {
        m.to_poly().to_string()
    }
}

/// A vanishing partial derivative `d^index func = 0`; every higher
/// derivative `d^beta func` with `beta >= index` vanishes with it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Vanishing {
    pub func: String,
    pub index: Vec<u32>,
}

impl Vanishing {
    pub fn new(func: &str, index: &[u32]) -> Self {
        Vanishing {
            func: func.into(),
            index: index.to_vec(),
        }
    }

    fn kills(&self, func: &str, derivs: &[u32]) -> bool {
        func == self.func
            && derivs.len() == self.index.len()
            && derivs.iter().zip(&self.index).all(|(d, i)| d >= i)
    }

    /// Label such as `tau_x` or `phi_uu`.
    pub fn label(&self) -> String {
        let names = crate::symexpr::parse(&self.func)
            .ok()
            .and_then(|e| e.to_poly().ok())
            .and_then(|p| p.as_atom().cloned());
        let args = match names {
            Some(Atom::Apply { args, .. }) => {
                args.iter().map(|a| a.to_string()).collect::<Vec<_>>()
            }
            _ => vec![],
        };
        let mut s = format!("{}_", self.func);
        for (a, n) in args.iter().zip(&self.index) {
            for _ in 0..*n {
                s.push_str(a);
            }
        }
        s
    }
}

/// Sets every derivative covered by `cs` to zero.
pub fn impose(p: &Poly, cs: &[Vanishing]) -> Result<Poly> {
    Ok(p.map_atoms(&mut |a| match a {
        Atom::Apply { func, derivs, .. } if cs.iter().any(|c| c.kills(func, derivs)) => {
            Ok(Some(Poly::zero()))
        }
        _ => Ok(None),
    })?)
}

fn is_coefficient_function(a: &Atom) -> bool {
    matches!(a, Atom::Apply { func, .. } if crate::symexpr::coefficient_default_args(func).is_some())
}

/// Removes the largest monomial factor common to all terms that does not
/// involve the unknown coefficient functions (powers of `f(u)` or `f'(u)`,
/// assumed nonzero) and the rational content, and fixes
/// the sign so that the first term is positive.
pub fn strip_content(p: &Poly) -> Poly {
    let mut common: Option<BTreeMap<Atom, i64>> = None;
    for (m, _) in p.terms() {
        let here: BTreeMap<Atom, i64> = m
            .factors()
            .iter()
            .filter(|(a, _)| !is_coefficient_function(a))
            .filter_map(|(a, e)| e.as_int().filter(|k| *k > 0).map(|k| (a.clone(), k)))
            .collect();
        common = Some(match common {
            None => here,
            Some(c) => c
                .into_iter()
                .filter_map(|(a, k)| here.get(&a).map(|h| (a, k.min(*h))))
                .collect(),
        });
    }
    let mut out = p.clone();
    for (a, k) in common.unwrap_or_default() {
        out = out.mul_factor(&a, &crate::symexpr::Exponent::Int(-k));
    }
    crate::symexpr::primitive_part(&out)
}

/// Canonical representatives of the nonzero equations in `eqs`.
pub fn equation_set<'a, I: IntoIterator<Item = &'a Poly>>(
    eqs: I,
) -> std::collections::BTreeSet<Poly> {
    eqs.into_iter()
        .filter(|p| !p.is_zero())
        .map(strip_content)
        .collect()
}

/// Derives vanishing derivatives by repeatedly looking for equations that
/// reduce to a single coefficient-function derivative (after removing
/// nonzero factors) and imposing them. Returns the constraints in the order
/// found.
pub fn single_atom_closure(eqs: &[Poly]) -> Result<Vec<Vanishing>> {
    let mut found: Vec<Vanishing> = Vec::new();
    let mut current: Vec<Poly> = eqs.to_vec();
    loop {
        let mut new = Vec::new();
        for e in &current {
            let s = strip_content(e);
            if let Some(Atom::Apply { func, derivs, .. }) = s.as_atom() {
                let v = Vanishing::new(func, derivs);
                if !found.contains(&v) && !new.contains(&v) {
                    new.push(v);
                }
            }
        }
        if new.is_empty() {
            return Ok(found);
        }
        found.extend(new);
        current = current
            .iter()
            .map(|e| impose(e, &found))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|e| !e.is_zero())
            .collect();
    }
}

/// First line of the reference determining system:
/// `tau_x = tau_u = xi_u = phi_uu = 0`.
pub fn first_line() -> Vec<Vanishing> {
    vec![
        Vanishing::new("tau", &[0, 1, 0]),
        Vanishing::new("tau", &[0, 0, 1]),
        Vanishing::new("xi", &[0, 0, 1]),
        Vanishing::new("phi", &[0, 0, 2]),
    ]
}

/// The remaining reference determining equations (arbitrary `f`), written
/// with `f = f(u)` and `f' = df1(u)`.
pub const REFERENCE_EQUATIONS: [&str; 11] = [
    "3*(2*phi_xu - 5*xi_xx)*f(u) + phi_x*df1(u)",
    "(phi_xu - 2*xi_xx)*df1(u)",
    "3*phi_xxu - 4*xi_xxx",
    "(phi_xxu - xi_xxx)*df1(u)",
    "(tau_t - 6*xi_x)*f(u) + phi*df1(u)",
    "4*phi_xxxu - 3*xi_xxxx",
    "phi_xxxxxx*f(u) - phi_t",
    "phi_xxxxx*df1(u) + xi_t + 6*phi_xxxxxu*f(u) - xi_xxxxxx*f(u)",
    "5*phi_xxxxu - 2*xi_xxxxx",
    "(5*phi_xxxxu - xi_xxxxx)*df1(u)",
    "(2*phi_xxxu - xi_xxxx)*df1(u)",
];

/// The reduced system: `tau_x = tau_u = 0`, `xi_t = xi_u = xi_xx = 0`,
/// `phi_t = phi_x = phi_uu = 0`, plus the classifying equation.
pub fn reduced_constraints() -> Vec<Vanishing> {
    vec![
        Vanishing::new("tau", &[0, 1, 0]),
        Vanishing::new("tau", &[0, 0, 1]),
        Vanishing::new("xi", &[1, 0, 0]),
        Vanishing::new("xi", &[0, 0, 1]),
        Vanishing::new("xi", &[0, 2, 0]),
        Vanishing::new("phi", &[1, 0, 0]),
        Vanishing::new("phi", &[0, 1, 0]),
        Vanishing::new("phi", &[0, 0, 2]),
    ]
}

pub const CLASSIFYING_EQUATION: &str = "(tau_t - 6*xi_x)*f(u) + phi*df1(u)";
pub const LINEAR_CLASSIFYING_EQUATION: &str = "(c - 6*a)*f(u) + (p*u + q)*df1(u)";

/// An extracted equation absent from the reference list, with the
/// reference equation it is the `u`-derivative of (if any).
#[derive(Clone, Debug, Serialize)]
pub struct ExtraEquation {
    pub equation: String,
    pub u_derivative_of: Option<String>,
}

/// Comparison of the extracted determining system with the reference.
#[derive(Clone, Debug, Serialize)]
pub struct DeterminingAnalysis {
    /// Number of jet-monomial coefficients before any simplification.
    pub raw_equations: usize,
    /// Vanishing derivatives found by single-atom closure.
    pub closure: Vec<String>,
    /// Whether every first-line constraint is among the closure results.
    pub first_line_derived: bool,
    /// Reference equations not found among the extracted ones.
    pub missing: Vec<String>,
    pub extra: Vec<ExtraEquation>,
    /// Nonzero equations left after imposing the reduced constraints.
    pub reduced: Vec<String>,
    /// Nonzero equations left after substituting the linear forms.
    pub linear: Vec<String>,
}

impl DeterminingAnalysis {
    /// The extraction agrees with the reference up to differential
    /// consequences, and both reductions leave only the classifying
    /// equation (and its `u`-derivative).
    pub fn passed(&self) -> bool {
        self.first_line_derived
            && self.missing.is_empty()
            && self.extra.iter().all(|e| e.u_derivative_of.is_some())
            && !self.reduced.is_empty()
            && !self.linear.is_empty()
            && self
                .reduced
                .iter()
                .chain(&self.linear)
                .all(|e| !e.starts_with("unexpected"))
    }
}

fn poly_of(s: &str) -> Result<Poly> {
    Ok(crate::symexpr::poly(s)?)
}

/// Lists `eqs`, marking those that are neither `target` nor its
/// `u`-derivative (both taken modulo `cs`) as unexpected.
fn leftover_beyond(
    eqs: &std::collections::BTreeSet<Poly>,
    target: &Poly,
    cs: &[Vanishing],
) -> Result<Vec<String>> {
    let base = strip_content(&impose(target, cs)?);
    let du = strip_content(&impose(&target.diff(&Symbol::u())?, cs)?);
    Ok(eqs
        .iter()
        .map(|e| {
            if *e == base || *e == du {
                format!("{e}")
            } else {
                format!("unexpected: {e}")
            }
        })
        .collect())
}

/// Extracts the determining system for arbitrary `f` with fully opaque
/// coefficients and compares it with the reference equations.
pub fn analyze_determining_system() -> Result<DeterminingAnalysis> {
    let f = poly_of("f(u)")?;
    let raw: Vec<Poly> = extract_determining_system(&VectorField::opaque(), &f)?
        .into_iter()
        .map(|e| e.coefficient)
        .collect();
    let closure = single_atom_closure(&raw)?;
    let line1 = first_line();
    let first_line_derived = line1.iter().all(|v| closure.contains(v));

    let after: Vec<Poly> = raw
        .iter()
        .map(|e| impose(e, &line1))
        .collect::<Result<_>>()?;
    let extracted = equation_set(&after);
    let reference: Vec<Poly> = REFERENCE_EQUATIONS
        .iter()
        .map(|s| poly_of(s))
        .collect::<Result<_>>()?;
    let reference_set = equation_set(&reference);
    let missing = reference_set
        .iter()
        .filter(|r| !extracted.contains(*r))
        .map(|r| r.to_string())
        .collect();
    let mut extra = Vec::new();
    for e in extracted.iter().filter(|e| !reference_set.contains(*e)) {
        let mut source = None;
        for r in &reference {
            if strip_content(&impose(&r.diff(&Symbol::u())?, &line1)?) == *e {
                source = Some(r.to_string());
                break;
            }
        }
        extra.push(ExtraEquation {
            equation: e.to_string(),
            u_derivative_of: source,
        });
    }

    let reduced_eqs: Vec<Poly> = raw
        .iter()
        .map(|e| impose(e, &reduced_constraints()))
        .collect::<Result<_>>()?;
    let reduced = leftover_beyond(
        &equation_set(&reduced_eqs),
        &poly_of(CLASSIFYING_EQUATION)?,
        &reduced_constraints(),
    )?;

    let u = Poly::jet(0, 0);
    let lin = |body: &str| -> Result<Poly> { poly_of(body) };
    let vars = [Symbol::t(), Symbol::x(), Symbol::u()];
    let mut linear_eqs = Vec::new();
    for e in &raw {
        let mut e = e.instantiate_multi("tau", &vars, &lin("c*t + d")?)?;
        e = e.instantiate_multi("xi", &vars, &lin("a*x + b")?)?;
        e = e.instantiate_multi(
            "phi",
            &vars,
            &(&(&Poly::param("p") * &u) + &Poly::param("q")),
        )?;
        linear_eqs.push(e);
    }
    let linear = leftover_beyond(
        &equation_set(&linear_eqs),
        &poly_of(LINEAR_CLASSIFYING_EQUATION)?,
        &[],
    )?;

    Ok(DeterminingAnalysis {
        raw_equations: raw.len(),
        closure: closure.iter().map(Vanishing::label).collect(),
        first_line_derived,
        missing,
        extra,
        reduced,
        linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::poly;

    fn p(s: &str) -> Poly {
        poly(s).unwrap()
    }

    #[test]
    fn total_derivative_examples() {
        assert_eq!(
            total_derivative(&p("f(u)*u_xxxxx"), Dir::X).unwrap(),
            p("df1(u)*u_x*u_xxxxx + f(u)*u_xxxxxx")
        );
        assert!(total_derivative(&p("x"), Dir::T).unwrap().is_zero());
        assert_eq!(total_derivative(&p("u^2"), Dir::X).unwrap(), p("2*u*u_x"));
        assert!(matches!(
            total_derivative(&p("u_xxxxxxx"), Dir::X),
            Err(JetError::Overflow { .. })
        ));
    }

    #[test]
    fn prolongation_examples() {
        let pr = prolong(&VectorField::parse("0", "1", "0").unwrap(), 6).unwrap();
        assert!(pr.values().all(Poly::is_zero));
        let pr = prolong(&VectorField::parse("0", "x", "0").unwrap(), 6).unwrap();
        assert_eq!(pr[&(0, 1)], p("-u_x"));
        assert_eq!(pr[&(0, 5)], p("-5*u_xxxxx"));
        let pr = prolong(&VectorField::parse("t", "x/6", "0").unwrap(), 6).unwrap();
        assert_eq!(pr[&(0, 1)], p("-1/6*u_x"));
        assert_eq!(pr[&(1, 0)], p("-u_t"));
        assert!(matches!(
            prolong(&VectorField::zero(), 7),
            Err(JetError::OrderTooHigh(7))
        ));
    }

    #[test]
    fn point_fields_only() {
        let q = VectorField::parse("u_x", "0", "0").unwrap();
        assert!(matches!(prolong(&q, 1), Err(JetError::NotPointField(_))));
    }
}
