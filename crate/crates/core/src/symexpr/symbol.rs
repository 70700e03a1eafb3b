use std::fmt;
use std::sync::Arc;

/// Highest combined jet order `t_order + x_order` the engine accepts.
pub const MAX_JET_ORDER: u32 = 7;

/// Highest derivative order of the opaque nonlinearity `f`.
pub const MAX_F_ORDER: u32 = 2;

/// Name of the opaque nonlinearity `f(u)`.
pub const NONLINEARITY: &str = "f";

pub type Name = Arc<str>;

/// Scalar symbols. Parameters sort before variables, variables before jets.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Param(Name),
    Var(Name),
    /// Derivative of the dependent variable `u(t, x)`; `Jet { t: 0, x: 0 }` is `u`.
    Jet {
        t: u32,
        x: u32,
    },
}

impl Symbol {
    pub fn param(name: &str) -> Self {
        Symbol::Param(Arc::from(name))
    }

    pub fn var(name: &str) -> Self {
        Symbol::Var(Arc::from(name))
    }

    pub fn jet(t: u32, x: u32) -> Self {
        Symbol::Jet { t, x }
    }

    pub fn u() -> Self {
        Symbol::Jet { t: 0, x: 0 }
    }

    pub fn t() -> Self {
        Symbol::var("t")
    }

    pub fn x() -> Self {
        Symbol::var("x")
    }

    pub fn is_param(&self) -> bool {
        matches!(self, Symbol::Param(_))
    }

    pub fn jet_order(&self) -> Option<(u32, u32)> {
        match self {
            Symbol::Jet { t, x } => Some((*t, *x)),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Param(n) | Symbol::Var(n) => write!(f, "{n}"),
            Symbol::Jet { t: 0, x: 0 } => write!(f, "u"),
            Symbol::Jet { t, x } => {
                write!(f, "u_")?;
                for _ in 0..*t {
                    write!(f, "t")?;
                }
                for _ in 0..*x {
                    write!(f, "x")?;
                }
                Ok(())
            }
        }
    }
}

/// Parameter names recognised by the parser.
pub const PARAMETERS: &[&str] = &[
    "m", "lambda", "alpha", "k", "k1", "k2", "a", "b", "c", "d", "p", "q", "c0", "c1", "c2", "c3",
    "c4", "c5", "c6", "eps1", "eps2", "eps3", "eps4", "eps5", "eps6", "t0", "x0",
];

/// Plain variable names recognised by the parser. `f` alone is the coordinate
/// used by equivalence operators; `f(...)` is the nonlinearity.
pub const VARIABLES: &[&str] = &["t", "x", "y", "s", "f", "x1", "x2", "X", "T"];

/// Unary opaque functions with an implicit independent variable, e.g. `v` is `v(y)`.
pub const UNARY_FUNCTIONS: &[(&str, &str)] = &[("v", "y"), ("u1", "x1"), ("u2", "x2")];

/// Opaque coefficient functions of the point-symmetry ansatz and their default arguments.
pub const COEFFICIENT_FUNCTIONS: &[(&str, &[&str])] = &[
    ("tau", &["t", "x", "u"]),
    ("xi", &["t", "x", "u"]),
    ("phi", &["t", "x", "u"]),
    ("psi", &["t", "x", "u", "f"]),
];

pub fn is_parameter(name: &str) -> bool {
    PARAMETERS.contains(&name)
}

pub fn is_variable(name: &str) -> bool {
    VARIABLES.contains(&name)
}

/// Symbol for a default argument name (`u` maps to the jet coordinate).
pub fn argument_symbol(name: &str) -> Symbol {
    if name == "u" {
        Symbol::u()
    } else if is_parameter(name) {
        Symbol::param(name)
    } else {
        Symbol::var(name)
    }
}

pub fn unary_default_arg(func: &str) -> Option<&'static str> {
    UNARY_FUNCTIONS
        .iter()
        .find(|(f, _)| *f == func)
        .map(|(_, a)| *a)
}

pub fn coefficient_default_args(func: &str) -> Option<&'static [&'static str]> {
    COEFFICIENT_FUNCTIONS
        .iter()
        .find(|(f, _)| *f == func)
        .map(|(_, a)| *a)
}
