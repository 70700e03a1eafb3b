//! Similarity reductions of `u_t = (f(u) u_xxxxx)_x`: the reduction tables,
//! first integrals of the reduced ODEs, chained reductions and the closed
//! form invariant solutions.

mod catalog;
mod chains;
mod closed;
mod integrals;

pub use catalog::{catalog, verify_row, verify_row_with, CaseId, ReducedOde, Reduction};

pub use chains::{
    chained_reductions, derive_fourth_order_condition, fourth_order_symmetry_cases,
    integrate_source, verify_chain, verify_chain_closed_form, ChainKind, ChainOutcome, ChainSetup,
    ChainedReduction, FourthOrderSymmetryCase, Stage, CHAIN_TOLERANCE, FOURTH_ORDER_CONDITION,
};
pub use closed::{
    closed_form, pde_residual, waiting_time_product, ClosedFormSolution, Piece, Region, SolutionId,
    WAITING_TIME_EXCLUDED,
};
pub use integrals::{
    first_integral_sink, first_integral_source, first_integral_travelling, source_ode_k0,
    FirstIntegral,
};

use crate::jetcalc::JetError;
use crate::liesym::LieError;
use crate::odeint::OdeError;
use crate::symexpr::{Poly, SymError, Symbol};
pub use rand_chacha::ChaCha8Rng;

use rand::SeedableRng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("no admissible sample point found for {0}")]
    NoSamples(String),
}

pub type Result<T> = std::result::Result<T, ReductionError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The residual normalizes to zero.
    Symbolic,
    /// Random sampling of the residual.
    Sampled,
    /// Evaluation along numerically computed data.
    Numeric,
}

/// Outcome of a residual check.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub id: String,
    pub passed: bool,
    pub method: Method,
    /// Largest residual seen (relative unless stated in `detail`).
    pub max_residual: f64,
    pub points: usize,
    pub detail: String,
}

/// Generator used by every sampled check.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn p(s: &str) -> Result<Poly> {
    Ok(crate::symexpr::poly(s)?)
}

fn y_sym() -> Symbol {
    Symbol::var("y")
}

/// `func(var)` differentiated `k` times.
fn unary(func: &str, var: &str, k: u32) -> Poly {
    Poly::apply(func, vec![k], vec![Poly::var(var)]).expect("unary function")
}

/// CSV with columns `id,params,max_residual,n_points,pass`. Parameters are
/// taken from a bracketed suffix of the id, `name[k=v,...]`.
pub fn reports_csv(reports: &[ResidualReport]) -> String {
    let mut out = String::from("id,params,max_residual,n_points,pass\n");
    for r in reports {
        let (id, params) = match r.id.split_once('[') {
            Some((id, rest)) => (id.to_string(), rest.trim_end_matches(']').replace(',', ";")),
            None => (r.id.clone(), String::new()),
        };
        let quote = |s: &str| {
            if s.contains([',', '"']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        out.push_str(&format!(
            "{},{},{:e},{},{}\n",
            quote(&id),
            quote(&params),
            r.max_residual,
            r.points,
            r.passed
        ));
    }
    out
}
