use super::error::{Result, SymError};
use super::poly::{Atom, Env, Poly, Rational};
use super::symbol::{is_parameter, Symbol};
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use std::collections::BTreeMap;

/// Parameters that may never be bound to zero.
const NONZERO: &[&str] = &["lambda", "m", "eps4", "eps5", "eps6"];

#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue {
    Exact(Rational),
    Float(f64),
}

impl ParamValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            ParamValue::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            ParamValue::Float(v) => *v,
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            ParamValue::Exact(r) => r.is_zero(),
            ParamValue::Float(v) => *v == 0.0,
        }
    }
}

impl Serialize for ParamValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ParamValue::Exact(r) => s.serialize_str(&r.to_string()),
            ParamValue::Float(v) => s.serialize_f64(*v),
        }
    }
}

/// Bindings of parameter symbols to values.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ParameterTable {
    bindings: BTreeMap<String, ParamValue>,
}

impl ParameterTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `name`, rejecting unknown names and inadmissible values.
    pub fn bind(&mut self, name: &str, value: ParamValue) -> Result<&mut Self> {
        if !is_parameter(name) {
            return Err(SymError::UnknownIdentifier {
                name: name.into(),
                pos: 0,
            });
        }
        if NONZERO.contains(&name) && value.is_zero() {
            return Err(SymError::Inadmissible(format!("{name} must be nonzero")));
        }
        if let ParamValue::Float(v) = value {
            if !v.is_finite() {
                return Err(SymError::Inadmissible(format!("{name} must be finite")));
            }
        }
        self.bindings.insert(name.to_string(), value);
        Ok(self)
    }

    pub fn bind_exact(&mut self, name: &str, value: Rational) -> Result<&mut Self> {
        self.bind(name, ParamValue::Exact(value))
    }

    pub fn bind_f64(&mut self, name: &str, value: f64) -> Result<&mut Self> {
        self.bind(name, ParamValue::Float(value))
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.bindings.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.bindings.iter()
    }

    /// Substitutes every exact binding into `p`.
    pub fn apply_exact(&self, p: &Poly) -> Result<Poly> {
        let map: BTreeMap<Atom, Poly> = self
            .bindings
            .iter()
            .filter_map(|(k, v)| match v {
                ParamValue::Exact(r) => {
                    Some((Atom::Sym(Symbol::param(k)), Poly::constant(r.clone())))
                }
                ParamValue::Float(_) => None,
            })
            .collect();
        p.subs_many(&map)
    }

    /// Adds all bindings to a numeric environment.
    pub fn extend_env(&self, env: &mut Env) {
        for (k, v) in &self.bindings {
            env.set(Symbol::param(k), v.to_f64());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::poly::rat;

    #[test]
    fn admissibility_is_enforced_on_bind() {
        let mut t = ParameterTable::new();
        assert!(t.bind_exact("m", rat(0)).is_err());
        assert!(t.bind_f64("lambda", 0.0).is_err());
        assert!(t.bind_exact("eps5", rat(0)).is_err());
        assert!(t.bind_exact("alpha", rat(0)).is_ok());
        assert!(t.bind_exact("nonsense", rat(1)).is_err());
    }
}
