//! Symbolic expression core: parsing, exact arithmetic, differentiation,
//! substitution and a canonical normal form.
//!
//! ```
//! use thinfilm::symexpr::{normalize, parse};
//! let e = parse("u^m*u").unwrap();
//! assert_eq!(normalize(&e).unwrap().to_string(), "u^(1 + m)");
//! ```

mod error;
mod eval;
mod expr;
mod params;
mod parse;
mod poly;
mod symbol;

pub use error::{Result, SymError};
pub use eval::{
    check_zero, check_zero_with, eval_numeric, max_relative, relative_value, sample_env,
    SampleConfig, ZeroVerdict,
};
pub use expr::Expr;
pub use params::{ParamValue, ParameterTable};
pub use parse::{parse, parse_with, Macros};
pub use poly::{primitive_part, rat, ratio, Atom, Env, Exponent, Monomial, Poly, Rational};
pub use symbol::{
    argument_symbol, coefficient_default_args, is_parameter, is_variable, Name, Symbol,
    MAX_F_ORDER, MAX_JET_ORDER, NONLINEARITY,
};

/// Canonical form of `e`.
pub fn normalize(e: &Expr) -> Result<Expr> {
    e.normalize()
}

/// Partial derivative of `e` with respect to `s`, other symbols held fixed.
pub fn diff(e: &Expr, s: &Symbol) -> Result<Expr> {
    Ok(e.to_poly()?.diff(s)?.to_expr())
}

/// Replaces every occurrence of the atom `target` by `replacement`, then
/// normalizes. The target must itself normalize to a single atom.
pub fn substitute(e: &Expr, target: &Expr, replacement: &Expr) -> Result<Expr> {
    let t = target.to_poly()?;
    let atom = t
        .as_atom()
        .ok_or_else(|| {
            SymError::Unsupported(format!("substitution target `{target}` is not an atom"))
        })?
        .clone();
    Ok(e.to_poly()?
        .subs_atom(&atom, &replacement.to_poly()?)?
        .to_expr())
}

/// Parses and normalizes in one step.
pub fn poly(text: &str) -> Result<Poly> {
    parse(text)?.to_poly()
}

/// Like [`poly`] with caller-supplied named sub-expressions.
pub fn poly_with(text: &str, macros: &Macros) -> Result<Poly> {
    parse_with(text, macros)?.to_poly()
}
