//! Numeric evaluation and the sampled zero test.

use super::error::{Result, SymError};
use super::expr::Expr;
use super::params::ParameterTable;
use super::poly::{Env, Poly};
use super::symbol::Symbol;
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// Evaluates `e` at `point` with parameters from `params`.
pub fn eval_numeric(
    e: &Expr,
    point: &BTreeMap<Symbol, f64>,
    params: &ParameterTable,
) -> Result<f64> {
    let mut env = Env::new();
    params.extend_env(&mut env);
    for (s, v) in point {
        env.set(s.clone(), *v);
    }
    e.eval(&env)
}

#[derive(Clone, Debug)]
pub struct SampleConfig {
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
    pub rel_tol: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            points: 20,
            lo: 0.3,
            hi: 2.7,
            rel_tol: 1e-9,
        }
    }
}

/// Outcome of an identity check.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZeroVerdict {
    /// The canonical form is the zero polynomial.
    Symbolic,
    /// Not closed symbolically, but every sample point is within tolerance.
    Sampled {
        points: usize,
        max_rel: f64,
    },
    Nonzero {
        max_rel: f64,
        leftover: String,
    },
}

impl ZeroVerdict {
    pub fn passed(&self) -> bool {
        !matches!(self, ZeroVerdict::Nonzero { .. })
    }
}

/// Draws values for every free symbol and opaque application of `p` not
/// already bound in `fixed`.
pub fn sample_env<R: Rng>(p: &Poly, rng: &mut R, lo: f64, hi: f64, fixed: &Env) -> Env {
    let mut env = fixed.clone();
    for s in p.free_symbols() {
        env.symbols
            .entry(s)
            .or_insert_with(|| rng.gen_range(lo..hi));
    }
    for a in p.applications() {
        env.atoms.entry(a).or_insert_with(|| rng.gen_range(lo..hi));
    }
    env
}

/// Relative size of `p` at one point: `|Σ terms| / Σ |terms|`.
pub fn relative_value(p: &Poly, env: &Env) -> Result<f64> {
    let (sum, mag) = p.eval_terms(env)?;
    if !sum.is_finite() || !mag.is_finite() {
        return Err(SymError::Domain("non-finite value".into()));
    }
    Ok(if mag == 0.0 { 0.0 } else { sum.abs() / mag })
}

/// Largest relative value over `cfg.points` random points. Points where the
/// expression is undefined are redrawn (up to a fixed budget).
pub fn max_relative<R: Rng>(p: &Poly, rng: &mut R, cfg: &SampleConfig, fixed: &Env) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    let mut last_err = None;
    while done < cfg.points {
        attempts += 1;
        if attempts > cfg.points * 20 {
            return Err(
                last_err.unwrap_or_else(|| SymError::Domain("no admissible sample point".into()))
            );
        }
        let env = sample_env(p, rng, cfg.lo, cfg.hi, fixed);
        match relative_value(p, &env) {
            Ok(r) => {
                worst = worst.max(r);
                done += 1;
            }
            Err(e) => last_err = Some(e),
        }
    }
    Ok(worst)
}

/// Symbolic zero test first, then the sampled test.
pub fn check_zero<R: Rng>(p: &Poly, rng: &mut R, cfg: &SampleConfig) -> Result<ZeroVerdict> {
    check_zero_with(p, rng, cfg, &Env::new())
}

pub fn check_zero_with<R: Rng>(
    p: &Poly,
    rng: &mut R,
    cfg: &SampleConfig,
    fixed: &Env,
) -> Result<ZeroVerdict> {
    if p.is_zero() || p.is_zero_cleared() {
        return Ok(ZeroVerdict::Symbolic);
    }
    let max_rel = max_relative(p, rng, cfg, fixed)?;
    if max_rel <= cfg.rel_tol {
        Ok(ZeroVerdict::Sampled {
            points: cfg.points,
            max_rel,
        })
    } else {
        let mut leftover = p.to_string();
        if leftover.len() > 2000 {
            leftover.truncate(2000);
            leftover.push_str(" ...");
        }
        Ok(ZeroVerdict::Nonzero { max_rel, leftover })
    }
}
