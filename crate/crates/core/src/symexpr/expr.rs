//! Expression trees as produced by the parser and consumed by the printer.

use super::error::{Result, SymError};
use super::poly::{Atom, Env, Exponent, Poly, Rational};
use super::symbol::{coefficient_default_args, unary_default_arg, Name, Symbol, NONLINEARITY};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;

/// Immutable expression tree. Build one with [`super::parse`] or from a
/// [`Poly`]; [`Expr::normalize`] returns the canonical tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(BigInt),
    Rational(Rational),
    Sym(Symbol),
    /// Opaque function with per-argument derivative orders.
    Apply {
        func: Name,
        derivs: Vec<u32>,
        args: Vec<Expr>,
    },
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Abs(Box<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Int(BigInt::from(n))
    }

    pub fn negated(self) -> Expr {
        Expr::Product(vec![Expr::int(-1), self])
    }

    /// Converts to the canonical polynomial representation.
    pub fn to_poly(&self) -> Result<Poly> {
        match self {
            Expr::Int(n) => Ok(Poly::constant(Rational::from_integer(n.clone()))),
            Expr::Rational(r) => Ok(Poly::constant(r.clone())),
            Expr::Sym(s) => Ok(Poly::symbol(s.clone())),
            Expr::Apply { func, derivs, args } => {
                let args = args.iter().map(Expr::to_poly).collect::<Result<Vec<_>>>()?;
                Poly::apply(func, derivs.clone(), args)
            }
            Expr::Sum(ts) => {
                let mut acc = Poly::zero();
                for t in ts {
                    acc = acc + t.to_poly()?;
                }
                Ok(acc)
            }
            Expr::Product(fs) => {
                let mut acc = Poly::one();
                for f in fs {
                    acc = &acc * &f.to_poly()?;
                }
                Ok(acc)
            }
            Expr::Pow(b, e) => {
                let e = e.to_poly()?;
                if let Expr::Abs(inner) = &**b {
                    let ex = Exponent::from_poly(e)?;
                    if ex.is_even_int() {
                        return inner.to_poly()?.pow(&ex);
                    }
                    return Err(SymError::Unsupported(
                        "abs(..) raised to a power other than an even integer".into(),
                    ));
                }
                b.to_poly()?.pow(&Exponent::from_poly(e)?)
            }
            Expr::Exp(a) => Ok(a.to_poly()?.exp()),
            Expr::Ln(a) => match &**a {
                Expr::Abs(inner) => inner.to_poly()?.ln_abs(),
                other => other.to_poly()?.ln(),
            },
            Expr::Abs(_) => Err(SymError::Unsupported(
                "abs(..) is only supported inside ln(..) or under an even power".into(),
            )),
        }
    }

    pub fn normalize(&self) -> Result<Expr> {
        Ok(self.to_poly()?.to_expr())
    }

    /// Direct floating-point evaluation of the tree as written.
    pub fn eval(&self, env: &Env) -> Result<f64> {
        match self {
            Expr::Int(n) => Ok(n.to_f64().unwrap_or(f64::NAN)),
            Expr::Rational(r) => Ok(r.to_f64().unwrap_or(f64::NAN)),
            Expr::Sym(s) => env
                .symbols
                .get(s)
                .copied()
                .ok_or_else(|| SymError::Unbound(s.to_string())),
            Expr::Apply { .. } => {
                let atom = self.to_poly()?;
                match atom.as_atom() {
                    Some(a) => a.eval(env),
                    None => Err(SymError::Unbound(self.to_string())),
                }
            }
            Expr::Sum(ts) => ts.iter().try_fold(0.0, |acc, t| Ok(acc + t.eval(env)?)),
            Expr::Product(fs) => fs.iter().try_fold(1.0, |acc, f| Ok(acc * f.eval(env)?)),
            Expr::Pow(b, e) => super::poly::real_pow(b.eval(env)?, e.eval(env)?),
            Expr::Exp(a) => Ok(a.eval(env)?.exp()),
            Expr::Ln(a) => {
                let v = a.eval(env)?;
                if v <= 0.0 {
                    return Err(SymError::LogDomain(format!("ln({v})")));
                }
                Ok(v.ln())
            }
            Expr::Abs(a) => Ok(a.eval(env)?.abs()),
        }
    }
}

impl Poly {
    /// Canonical expression tree for this polynomial.
    pub fn to_expr(&self) -> Expr {
        let mut terms = Vec::with_capacity(self.len());
        for (m, c) in self.terms() {
            let mut factors = Vec::new();
            if !c.is_one() || m.is_one() {
                factors.push(rational_expr(c));
            }
            for (a, e) in m.factors() {
                factors.push(power_expr(a, e));
            }
            terms.push(if factors.len() == 1 {
                factors.pop().unwrap()
            } else {
                Expr::Product(factors)
            });
        }
        match terms.len() {
            0 => Expr::int(0),
            1 => terms.pop().unwrap(),
            _ => Expr::Sum(terms),
        }
    }
}

fn rational_expr(c: &Rational) -> Expr {
    if c.is_integer() {
        Expr::Int(c.to_integer())
    } else {
        Expr::Rational(c.clone())
    }
}

fn exponent_expr(e: &Exponent) -> Expr {
    match e {
        Exponent::Int(k) => Expr::int(*k),
        Exponent::Gen(p) => p.to_expr(),
    }
}

fn atom_expr(a: &Atom) -> Expr {
    match a {
        Atom::Prime(p) => Expr::Int(p.clone()),
        Atom::Sym(s) => Expr::Sym(s.clone()),
        Atom::Apply { func, derivs, args } => Expr::Apply {
            func: func.clone(),
            derivs: derivs.clone(),
            args: args.iter().map(Poly::to_expr).collect(),
        },
        Atom::Ln { arg, abs } => {
            let inner = arg.to_expr();
            Expr::Ln(Box::new(if *abs {
                Expr::Abs(Box::new(inner))
            } else {
                inner
            }))
        }
        Atom::Base(b) => b.to_expr(),
        Atom::Exp(a) => Expr::Exp(Box::new(a.to_expr())),
    }
}

fn power_expr(a: &Atom, e: &Exponent) -> Expr {
    let base = atom_expr(a);
    if *e == Exponent::Int(1) {
        base
    } else {
        Expr::Pow(Box::new(base), Box::new(exponent_expr(e)))
    }
}

// ---------------------------------------------------------------------------
// Printing

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_POW: u8 = 3;
const PREC_ATOM: u8 = 4;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Int(n) if n.is_negative() => PREC_SUM,
            Expr::Int(_) => PREC_ATOM,
            Expr::Rational(_) => PREC_PRODUCT,
            Expr::Sum(ts) if ts.len() > 1 => PREC_SUM,
            Expr::Sum(ts) => ts.first().map_or(PREC_ATOM, Expr::precedence),
            Expr::Product(fs) if fs.len() > 1 => {
                if leading_negative(fs) {
                    PREC_SUM
                } else {
                    PREC_PRODUCT
                }
            }
            Expr::Product(fs) => fs.first().map_or(PREC_ATOM, Expr::precedence),
            Expr::Pow(..) => PREC_POW,
            _ => PREC_ATOM,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Expr::Sym(s) => write!(f, "{s}"),
            Expr::Apply { func, derivs, args } => write_apply(f, func, derivs, args),
            Expr::Sum(ts) => {
                if ts.is_empty() {
                    return write!(f, "0");
                }
                for (i, t) in ts.iter().enumerate() {
                    if i == 0 {
                        t.write_prec(f, PREC_SUM)?;
                        continue;
                    }
                    match negated(t) {
                        Some(pos) => {
                            write!(f, " - ")?;
                            pos.write_prec(f, PREC_PRODUCT)?;
                        }
                        None => {
                            write!(f, " + ")?;
                            t.write_prec(f, PREC_PRODUCT)?;
                        }
                    }
                }
                Ok(())
            }
            Expr::Product(fs) => {
                if fs.is_empty() {
                    return write!(f, "1");
                }
                if let Some(pos) = negated(self) {
                    write!(f, "-")?;
                    return pos.write_prec(f, PREC_PRODUCT);
                }
                for (i, x) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    // Rationals print as `a/b`, which only binds left-to-right
                    // safely in leading position.
                    let min = if i == 0 { PREC_PRODUCT } else { PREC_POW };
                    x.write_prec(f, min)?;
                }
                Ok(())
            }
            Expr::Pow(b, e) => {
                b.write_prec(f, PREC_ATOM)?;
                write!(f, "^")?;
                match &**e {
                    Expr::Int(n) if !n.is_negative() => write!(f, "{n}"),
                    Expr::Sym(s) => write!(f, "{s}"),
                    other => {
                        write!(f, "(")?;
                        other.write_prec(f, 0)?;
                        write!(f, ")")
                    }
                }
            }
            Expr::Exp(a) => {
                write!(f, "e^(")?;
                a.write_prec(f, 0)?;
                write!(f, ")")
            }
            Expr::Ln(a) => {
                write!(f, "ln(")?;
                a.write_prec(f, 0)?;
                write!(f, ")")
            }
            Expr::Abs(a) => {
                write!(f, "abs(")?;
                a.write_prec(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

fn leading_negative(fs: &[Expr]) -> bool {
    match fs.first() {
        Some(Expr::Int(n)) => n.is_negative(),
        Some(Expr::Rational(r)) => r.is_negative(),
        _ => false,
    }
}

/// If `e` is a term with a negative leading constant, returns its negation.
fn negated(e: &Expr) -> Option<Expr> {
    match e {
        Expr::Int(n) if n.is_negative() => Some(Expr::Int(-n)),
        Expr::Rational(r) if r.is_negative() => Some(Expr::Rational(-r)),
        Expr::Product(fs) if leading_negative(fs) => {
            let mut rest = fs.clone();
            let head = match &rest[0] {
                Expr::Int(n) => Expr::Int(-n),
                Expr::Rational(r) => Expr::Rational(-r),
                _ => unreachable!(),
            };
            let is_one = matches!(&head, Expr::Int(n) if n.is_one());
            if is_one && rest.len() > 1 {
                rest.remove(0);
            } else {
                rest[0] = head;
            }
            Some(if rest.len() == 1 {
                rest.pop().unwrap()
            } else {
                Expr::Product(rest)
            })
        }
        _ => None,
    }
}

fn write_apply(
    f: &mut fmt::Formatter<'_>,
    func: &str,
    derivs: &[u32],
    args: &[Expr],
) -> fmt::Result {
    if func == NONLINEARITY && derivs.len() == 1 {
        match derivs[0] {
            0 => write!(f, "f(")?,
            n => write!(f, "df{n}(")?,
        }
    } else if unary_default_arg(func).is_some() && derivs.len() == 1 {
        match derivs[0] {
            0 => write!(f, "{func}(")?,
            n => write!(f, "{func}_{n}(")?,
        }
    } else if let Some(names) = coefficient_default_args(func) {
        write!(f, "{func}")?;
        if derivs.iter().any(|d| *d > 0) {
            write!(f, "_")?;
            for (name, d) in names.iter().zip(derivs) {
                for _ in 0..*d {
                    write!(f, "{name}")?;
                }
            }
        }
        write!(f, "(")?;
    } else {
        write!(f, "{func}(")?;
    }
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        a.write_prec(f, 0)?;
    }
    write!(f, ")")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_expr().fmt(f)
    }
}

impl From<&Poly> for Expr {
    fn from(p: &Poly) -> Expr {
        p.to_expr()
    }
}

impl Expr {
    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Int(n) if n.is_zero())
    }
}
