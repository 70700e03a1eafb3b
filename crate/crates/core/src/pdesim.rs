//! Conservative finite-difference solver for `u_t = (f(u) u_xxxxx)_x`.
//!
//! Method of lines on a uniform grid: a second-order half-node stencil for
//! `u_xxxxx`, arithmetic-mean face values for `f`, and either classical RK4
//! (`dt = sigma dx^6 / max f`) or a two-stage L-stable SDIRK method for runs
//! where the explicit step limit is out of reach.

use crate::liesym::NonlinearityFamily;
use crate::reductions::{closed_form, ClosedFormSolution, ReductionError, SolutionId};
use crate::symexpr::{Env, Poly, SymError, Symbol};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("non-finite value at t = {t} (node {node})")]
    NonFinite { t: f64, node: usize },
    #[error("positivity violated at t = {t} (node {node}, u = {value}) for a fractional power")]
    Positivity { t: f64, node: usize, value: f64 },
    #[error("newton iteration failed to converge at t = {t} (residual {residual:e})")]
    Newton { t: f64, residual: f64 },
    #[error("exact solution undefined at (t, x) = ({t}, {x})")]
    Domain { t: f64, x: f64 },
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("invalid JSON: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

fn config_err(field: &str, reason: impl Into<String>) -> SimError {
    SimError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Number of ghost nodes per side.
pub const GHOSTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    /// Interior node count.
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        let g = Grid1D { x_min, x_max, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 16 {
            return Err(config_err(
                "grid.n",
                format!("need at least 16 nodes, got {}", self.n),
            ));
        }
        if self.x_max.partial_cmp(&self.x_min) != Some(Ordering::Greater)
            || !self.x_min.is_finite()
            || !self.x_max.is_finite()
        {
            return Err(config_err("grid", "x_max must exceed x_min"));
        }
        Ok(())
    }

    /// Spacing for Dirichlet grids: `(x_max - x_min) / (n + 1)`, nodes strictly inside.
    pub fn dx(&self, periodic: bool) -> f64 {
        if periodic {
            (self.x_max - self.x_min) / self.n as f64
        } else {
            (self.x_max - self.x_min) / (self.n + 1) as f64
        }
    }

    /// Node `i`, where negative indices and indices `>= n` are ghost nodes.
    pub fn node(&self, i: isize, periodic: bool) -> f64 {
        let dx = self.dx(periodic);
        if periodic {
            self.x_min + i as f64 * dx
        } else {
            self.x_min + (i + 1) as f64 * dx
        }
    }

    pub fn nodes(&self, periodic: bool) -> Vec<f64> {
        (0..self.n as isize)
            .map(|i| self.node(i, periodic))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
}

/// Numeric `f(u)` for a family with bound parameters.
#[derive(Clone, Debug)]
pub enum Nonlinearity {
    Exp { lambda: f64, scale: f64 },
    Power { m: f64, scale: f64 },
    Explicit(Poly),
}

impl Nonlinearity {
    pub fn from_family(family: &NonlinearityFamily, params: &Env) -> Result<Self> {
        let num = |p: &Poly, what: &str| -> Result<f64> {
            p.eval(params)
                .map_err(|e| config_err("family", format!("{what}: {e}")))
        };
        Ok(match family {
            NonlinearityFamily::Arbitrary => {
                return Err(config_err("family", "an explicit nonlinearity is required"))
            }
            NonlinearityFamily::Exponential { lambda, scale } => Nonlinearity::Exp {
                lambda: num(lambda, "lambda")?,
                scale: num(scale, "scale")?,
            },
            NonlinearityFamily::Power { m, scale } => Nonlinearity::Power {
                m: num(m, "m")?,
                scale: num(scale, "scale")?,
            },
            NonlinearityFamily::Explicit { f } => Nonlinearity::Explicit(f.clone()),
        })
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Exp { lambda, scale } => scale * (lambda * u).exp(),
            Nonlinearity::Power { m, scale } => scale * u.powf(*m),
            Nonlinearity::Explicit(f) => {
                f.eval(&Env::new().with(Symbol::u(), u)).unwrap_or(f64::NAN)
            }
        }
    }

    /// True for powers that are only real for `u > 0`.
    fn needs_positive(&self) -> bool {
        matches!(self, Nonlinearity::Power { m, .. } if m.fract() != 0.0 || *m < 0.0)
    }
}

/// Boundary treatment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    /// Ghost nodes filled from a closed-form solution at the stage time.
    Exact {
        solution: String,
        params: BTreeMap<String, f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stepper {
    /// Classical RK4 with `dt = sigma dx^6 / max f`, recomputed each step.
    Rk4 { sigma: f64 },
    /// Two-stage, second-order, L-stable SDIRK with a fixed step.
    Sdirk2 { dt: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initial {
    /// The boundary solution at `t_start`.
    Exact,
    /// `mean + amplitude sin(2 pi wavenumber (x - x_min) / L)`.
    Sine {
        mean: f64,
        amplitude: f64,
        wavenumber: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Family spec such as `power:m=1`; taken from the solution for exact boundaries.
    #[serde(default)]
    pub family: Option<String>,
    pub grid: Grid1D,
    pub boundary: Boundary,
    pub stepper: Stepper,
    #[serde(default)]
    pub initial: Option<Initial>,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    /// Record every this many steps (and always the last step).
    #[serde(default = "default_cadence")]
    pub output_every: usize,
    /// Stop after this many steps instead of at `t_end` (RK4 only).
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Grid sizes for a convergence study of the same run.
    #[serde(default)]
    pub convergence: Option<Vec<usize>>,
    /// Pass criteria checked by [`Expectations::check`].
    #[serde(default)]
    pub expect: Option<Expectations>,
}

/// Optional pass criteria for a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub max_l2_error: Option<f64>,
    pub max_rel_l2_error: Option<f64>,
    pub max_linf_error: Option<f64>,
    pub max_mass_drift: Option<f64>,
    /// Inclusive range for every observed order of a convergence study.
    pub order_range: Option<(f64, f64)>,
}

/// One evaluated expectation.
#[derive(Clone, Debug, Serialize)]
pub struct ExpectationCheck {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl Expectations {
    pub fn check(
        &self,
        result: &RunResult,
        study: Option<&ConvergenceStudy>,
    ) -> Vec<ExpectationCheck> {
        let mut out = Vec::new();
        let last = result.last();
        let mut upper = |name: &str, bound: Option<f64>, value: Option<f64>| {
            if let Some(b) = bound {
                let v = value.unwrap_or(f64::NAN);
                out.push(ExpectationCheck {
                    name: name.into(),
                    value: v,
                    bound: format!("<= {b:e}"),
                    passed: v <= b,
                });
            }
        };
        upper("l2_error", self.max_l2_error, last.l2_error);
        upper("rel_l2_error", self.max_rel_l2_error, last.rel_l2_error);
        upper("linf_error", self.max_linf_error, last.linf_error);
        upper("mass_drift", self.max_mass_drift, Some(result.mass_drift()));
        if let Some((lo, hi)) = self.order_range {
            let orders = study.map(|s| s.orders.clone()).unwrap_or_default();
            if orders.is_empty() {
                out.push(ExpectationCheck {
                    name: "order".into(),
                    value: f64::NAN,
                    bound: format!("in [{lo}, {hi}]"),
                    passed: false,
                });
            }
            for (i, p) in orders.into_iter().enumerate() {
                out.push(ExpectationCheck {
                    name: format!("order[{i}]"),
                    value: p,
                    bound: format!("in [{lo}, {hi}]"),
                    passed: (lo..=hi).contains(&p),
                });
            }
        }
        out
    }
}

fn default_cadence() -> usize {
    100
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| SimError::Json(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        match self.stepper {
            Stepper::Rk4 { sigma } if !(sigma > 0.0 && sigma <= 0.04) => {
                return Err(config_err(
                    "stepper.sigma",
                    format!("must lie in (0, 0.04], got {sigma}"),
                ))
            }
            Stepper::Sdirk2 { dt } if !(dt > 0.0 && dt.is_finite()) => {
                return Err(config_err(
                    "stepper.dt",
                    format!("must be positive, got {dt}"),
                ))
            }
            _ => {}
        }
        if self
            .t_end
            .partial_cmp(&self.t_start)
            .is_none_or(Ordering::is_lt)
        {
            return Err(config_err("t_end", "must not precede t_start"));
        }
        if self.output_every == 0 {
            return Err(config_err("output_every", "must be positive"));
        }
        if matches!(self.boundary, Boundary::Periodic) {
            if self.family.is_none() {
                return Err(config_err("family", "required for periodic runs"));
            }
            if !matches!(self.initial, Some(Initial::Sine { .. })) {
                return Err(config_err(
                    "initial",
                    "periodic runs need a sine initial condition",
                ));
            }
        }
        if let Some(ns) = &self.convergence {
            if ns.len() < 2 || ns.iter().any(|&n| n < 16) {
                return Err(config_err(
                    "convergence",
                    "need at least two grid sizes, each >= 16",
                ));
            }
        }
        Ok(())
    }
}

/// Everything `flux_divergence` needs besides the state.
pub struct Problem {
    pub grid: Grid1D,
    pub f: Nonlinearity,
    pub periodic: bool,
    pub exact: Option<ClosedFormSolution>,
    dx: f64,
    xs: Vec<f64>,
}

impl Problem {
    pub fn new(
        grid: Grid1D,
        f: Nonlinearity,
        periodic: bool,
        exact: Option<ClosedFormSolution>,
    ) -> Result<Self> {
        grid.validate()?;
        let dx = grid.dx(periodic);
        let xs = (-(GHOSTS as isize)..(grid.n + GHOSTS) as isize)
            .map(|i| grid.node(i, periodic))
            .collect();
        Ok(Problem {
            grid,
            f,
            periodic,
            exact,
            dx,
            xs,
        })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        match &cfg.boundary {
            Boundary::Periodic => {
                let spec = cfg.family.as_deref().unwrap_or_default();
                let family = NonlinearityFamily::parse(spec)
                    .map_err(|e| config_err("family", e.to_string()))?;
                let f = Nonlinearity::from_family(&family, &Env::new())?;
                Problem::new(cfg.grid, f, true, None)
            }
            Boundary::Exact { solution, params } => {
                let id = SolutionId::parse(solution)
                    .map_err(|e| config_err("boundary.solution", e.to_string()))?;
                let sol = closed_form(id, params)
                    .map_err(|e| config_err("boundary.params", e.to_string()))?;
                if let Some(spec) = &cfg.family {
                    let given = NonlinearityFamily::parse(spec)
                        .map_err(|e| config_err("family", e.to_string()))?;
                    let a = Nonlinearity::from_family(&given, &Env::new())?;
                    let b = Nonlinearity::from_family(&sol.family, &sol.env())?;
                    if [0.5, 1.0, 1.7]
                        .iter()
                        .any(|&u| (a.eval(u) - b.eval(u)).abs() > 1e-12 * b.eval(u).abs().max(1.0))
                    {
                        return Err(config_err(
                            "family",
                            format!("does not match the nonlinearity of {solution}"),
                        ));
                    }
                }
                let f = Nonlinearity::from_family(&sol.family, &sol.env())?;
                Problem::new(cfg.grid, f, false, Some(sol))
            }
        }
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Interior node positions.
    pub fn nodes(&self) -> &[f64] {
        &self.xs[GHOSTS..GHOSTS + self.grid.n]
    }

    pub fn exact_at(&self, t: f64, x: f64) -> Result<f64> {
        let sol = self
            .exact
            .as_ref()
            .ok_or_else(|| config_err("boundary", "no exact solution"))?;
        let v = sol.eval(t, x).map_err(|_| SimError::Domain { t, x })?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SimError::Domain { t, x })
        }
    }

    /// Interior values padded with ghost nodes for time `t`.
    fn padded(&self, t: f64, u: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let n = self.grid.n;
        out.clear();
        out.resize(n + 2 * GHOSTS, 0.0);
        out[GHOSTS..GHOSTS + n].copy_from_slice(u);
        for g in 0..GHOSTS {
            if self.periodic {
                out[g] = u[n - GHOSTS + g];
                out[GHOSTS + n + g] = u[g];
            } else {
                out[g] = self.exact_at(t, self.xs[g])?;
                let j = GHOSTS + n + g;
                out[j] = self.exact_at(t, self.xs[j])?;
            }
        }
        Ok(())
    }

    /// Time derivative at interior nodes, given a padded array.
    fn divergence_padded(&self, p: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let dx5 = self.dx.powi(5);
        // Face j sits between padded nodes j and j + 1.
        let face = |j: usize| {
            let w = (p[j + 3] - 5.0 * p[j + 2] + 10.0 * p[j + 1] - 10.0 * p[j] + 5.0 * p[j - 1]
                - p[j - 2])
                / dx5;
            self.f.eval(0.5 * (p[j] + p[j + 1])) * w
        };
        let mut left = face(GHOSTS - 1);
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let right = face(GHOSTS + i);
            *o = (right - left) / self.dx;
            left = right;
        }
    }

    fn check(&self, t: f64, u: &[f64]) -> Result<()> {
        let positive = self.f.needs_positive();
        for (node, &value) in u.iter().enumerate() {
            if !value.is_finite() {
                return Err(SimError::NonFinite { t, node });
            }
            if positive && value <= 0.0 {
                return Err(SimError::Positivity { t, node, value });
            }
        }
        Ok(())
    }

    fn max_f(&self, u: &[f64]) -> f64 {
        u.iter().map(|&v| self.f.eval(v).abs()).fold(0.0, f64::max)
    }
}

/// `du/dt` at the interior nodes of `state`.
pub fn flux_divergence(problem: &Problem, state: &FieldState) -> Result<Vec<f64>> {
    problem.check(state.t, &state.u)?;
    let mut pad = Vec::new();
    problem.padded(state.t, &state.u, &mut pad)?;
    let mut out = vec![0.0; problem.grid.n];
    problem.divergence_padded(&pad, &mut out);
    Ok(out)
}

fn rhs(problem: &Problem, t: f64, u: &[f64], pad: &mut Vec<f64>, out: &mut [f64]) -> Result<()> {
    problem.check(t, u)?;
    problem.padded(t, u, pad)?;
    problem.divergence_padded(pad, out);
    Ok(())
}

/// Explicit step size `sigma dx^6 / max f`.
pub fn stable_dt(problem: &Problem, u: &[f64], sigma: f64) -> f64 {
    sigma * problem.dx.powi(6) / problem.max_f(u).max(f64::MIN_POSITIVE)
}

/// One classical RK4 step of size `dt`, boundary data at the stage times.
pub fn step_rk4(problem: &Problem, state: &FieldState, dt: f64) -> Result<FieldState> {
    let n = problem.grid.n;
    let mut pad = Vec::with_capacity(n + 2 * GHOSTS);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let u = &state.u;
    let t = state.t;
    rhs(problem, t, u, &mut pad, &mut k1)?;
    for i in 0..n {
        tmp[i] = u[i] + 0.5 * dt * k1[i];
    }
    rhs(problem, t + 0.5 * dt, &tmp, &mut pad, &mut k2)?;
    for i in 0..n {
        tmp[i] = u[i] + 0.5 * dt * k2[i];
    }
    rhs(problem, t + 0.5 * dt, &tmp, &mut pad, &mut k3)?;
    for i in 0..n {
        tmp[i] = u[i] + dt * k3[i];
    }
    rhs(problem, t + dt, &tmp, &mut pad, &mut k4)?;
    let next: Vec<f64> = (0..n)
        .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    problem.check(t + dt, &next)?;
    Ok(FieldState { t: t + dt, u: next })
}

const GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Jacobian of the semi-discrete right-hand side by finite differences,
/// perturbing every seventh node at once (the stencil couples `i - 3 ..= i + 3`).
fn jacobian(problem: &Problem, t: f64, u: &[f64], f0: &[f64]) -> Result<DMatrix<f64>> {
    let n = problem.grid.n;
    let mut jac = DMatrix::zeros(n, n);
    let mut pad = Vec::new();
    let mut up = u.to_vec();
    let mut fp = vec![0.0; n];
    // Periodic wrap-around aliases columns unless n is a multiple of 7.
    if problem.periodic && !n.is_multiple_of(7) {
        return jacobian_plain(problem, t, u, f0);
    }
    for color in 0..7 {
        let cols: Vec<usize> = (color..n).step_by(7).collect();
        let mut hs = Vec::with_capacity(cols.len());
        for &c in &cols {
            let h = 1e-7 * u[c].abs().max(1e-3);
            up[c] = u[c] + h;
            hs.push(h);
        }
        rhs(problem, t, &up, &mut pad, &mut fp)?;
        for (&c, &h) in cols.iter().zip(&hs) {
            up[c] = u[c];
            for r in c.saturating_sub(3)..(c + 4).min(n) {
                jac[(r, c)] = (fp[r] - f0[r]) / h;
            }
            if problem.periodic {
                for d in 1..=3 {
                    let (a, b) = ((c + n - d) % n, (c + d) % n);
                    jac[(a, c)] = (fp[a] - f0[a]) / h;
                    jac[(b, c)] = (fp[b] - f0[b]) / h;
                }
            }
        }
    }
    Ok(jac)
}

fn jacobian_plain(problem: &Problem, t: f64, u: &[f64], f0: &[f64]) -> Result<DMatrix<f64>> {
    let n = problem.grid.n;
    let mut jac = DMatrix::zeros(n, n);
    let mut pad = Vec::new();
    let mut up = u.to_vec();
    let mut fp = vec![0.0; n];
    for c in 0..n {
        let h = 1e-7 * u[c].abs().max(1e-3);
        up[c] = u[c] + h;
        rhs(problem, t, &up, &mut pad, &mut fp)?;
        up[c] = u[c];
        for r in 0..n {
            jac[(r, c)] = (fp[r] - f0[r]) / h;
        }
    }
    Ok(jac)
}

/// Solves `U = base + a F(t, U)` by Newton's method. Returns `U` and
/// `(U - base) / a`, which equals `F(t, U)` without amplifying the stiff
/// components of the iteration error.
fn implicit_stage(
    problem: &Problem,
    t: f64,
    base: &[f64],
    a: f64,
    guess: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.grid.n;
    let mut pad = Vec::new();
    let mut u = guess.to_vec();
    let mut fu = vec![0.0; n];
    let scale = base.iter().map(|v| v.abs()).fold(1.0, f64::max);
    // Round-off level of a*F: the stencil weights sum to 32 per face, two faces per node.
    let noise = a.abs() * 64.0 * f64::EPSILON * problem.max_f(guess) * scale / problem.dx.powi(6);
    let tol = (1e-14 * scale).max(10.0 * noise);
    let mut last = f64::INFINITY;
    let mut converged = false;
    for _ in 0..25 {
        rhs(problem, t, &u, &mut pad, &mut fu)?;
        let g: DVector<f64> = DVector::from_iterator(n, (0..n).map(|i| u[i] - base[i] - a * fu[i]));
        last = g.amax();
        if last <= tol {
            converged = true;
            break;
        }
        let mut m = jacobian(problem, t, &u, &fu)?;
        m *= -a;
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let delta = m
            .lu()
            .solve(&g)
            .ok_or(SimError::Newton { t, residual: last })?;
        for i in 0..n {
            u[i] -= delta[i];
        }
        // The residual floor is set by cancellation in F, so a small update also counts.
        if delta.amax() <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SimError::Newton { t, residual: last });
    }
    let k = (0..n).map(|i| (u[i] - base[i]) / a).collect();
    Ok((u, k))
}

/// One SDIRK2 step (`gamma = 1 - 1/sqrt 2`, stiffly accurate, L-stable).
pub fn step_sdirk2(problem: &Problem, state: &FieldState, dt: f64) -> Result<FieldState> {
    let n = problem.grid.n;
    let t = state.t;
    let u = &state.u;
    let (u1, k1) = implicit_stage(problem, t + GAMMA * dt, u, GAMMA * dt, u)?;
    let base2: Vec<f64> = (0..n).map(|i| u[i] + (1.0 - GAMMA) * dt * k1[i]).collect();
    let (_, k2) = implicit_stage(problem, t + dt, &base2, GAMMA * dt, &u1)?;
    let next: Vec<f64> = (0..n).map(|i| base2[i] + GAMMA * dt * k2[i]).collect();
    problem.check(t + dt, &next)?;
    Ok(FieldState { t: t + dt, u: next })
}

/// Advances `state` by one step of the configured method, never past `t_end`.
pub fn step(
    problem: &Problem,
    state: &FieldState,
    stepper: &Stepper,
    t_end: f64,
) -> Result<FieldState> {
    let remaining = t_end - state.t;
    match *stepper {
        Stepper::Rk4 { sigma } => step_rk4(
            problem,
            state,
            stable_dt(problem, &state.u, sigma).min(remaining),
        ),
        Stepper::Sdirk2 { dt } => step_sdirk2(problem, state, dt.min(remaining)),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Sample {
    pub t: f64,
    pub l2_error: Option<f64>,
    pub linf_error: Option<f64>,
    /// `l2_error / ||u_exact||_2`.
    pub rel_l2_error: Option<f64>,
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub samples: Vec<Sample>,
    pub steps: usize,
    #[serde(skip)]
    pub final_state: FieldState,
    #[serde(skip)]
    pub nodes: Vec<f64>,
}

impl RunResult {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("at least the initial sample")
    }

    pub fn mass_drift(&self) -> f64 {
        let m0 = self.samples[0].mass;
        (self.last().mass - m0).abs() / m0.abs().max(f64::MIN_POSITIVE)
    }

    pub fn timeseries_csv(&self) -> String {
        let mut s = String::from("t,L2_error,Linf_error,mass\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.samples {
            let _ = writeln!(
                s,
                "{:e},{},{},{:.17e}",
                r.t,
                opt(r.l2_error),
                opt(r.linf_error),
                r.mass
            );
        }
        s
    }

    pub fn final_csv(&self) -> String {
        let mut s = String::from("x,u\n");
        for (x, u) in self.nodes.iter().zip(&self.final_state.u) {
            let _ = writeln!(s, "{x:.17e},{u:.17e}");
        }
        s
    }
}

fn sample(problem: &Problem, state: &FieldState) -> Result<Sample> {
    let dx = problem.dx;
    let mass = state.u.iter().sum::<f64>() * dx;
    if problem.exact.is_none() {
        return Ok(Sample {
            t: state.t,
            l2_error: None,
            linf_error: None,
            rel_l2_error: None,
            mass,
        });
    }
    let (mut e2, mut einf, mut n2) = (0.0, 0.0f64, 0.0);
    for (x, u) in problem.nodes().iter().zip(&state.u) {
        let ex = problem.exact_at(state.t, *x)?;
        let e = u - ex;
        e2 += e * e;
        n2 += ex * ex;
        einf = einf.max(e.abs());
    }
    let l2 = (e2 * dx).sqrt();
    let norm = (n2 * dx).sqrt();
    Ok(Sample {
        t: state.t,
        l2_error: Some(l2),
        linf_error: Some(einf),
        rel_l2_error: Some(if norm > 0.0 { l2 / norm } else { l2 }),
        mass,
    })
}

/// Initial state for a configuration.
pub fn initial_state(problem: &Problem, cfg: &SimConfig) -> Result<FieldState> {
    let xs = problem.nodes();
    let u = match cfg.initial.clone().unwrap_or(Initial::Exact) {
        Initial::Exact => xs
            .iter()
            .map(|&x| problem.exact_at(cfg.t_start, x))
            .collect::<Result<Vec<_>>>()?,
        Initial::Sine {
            mean,
            amplitude,
            wavenumber,
        } => {
            let len = cfg.grid.x_max - cfg.grid.x_min;
            xs.iter()
                .map(|&x| {
                    mean + amplitude
                        * (2.0 * std::f64::consts::PI * wavenumber as f64 * (x - cfg.grid.x_min)
                            / len)
                            .sin()
                })
                .collect()
        }
    };
    problem.check(cfg.t_start, &u)?;
    Ok(FieldState { t: cfg.t_start, u })
}

/// Runs a configuration, recording error norms and mass.
pub fn run(cfg: &SimConfig) -> Result<RunResult> {
    let problem = Problem::from_config(cfg)?;
    let mut state = initial_state(&problem, cfg)?;
    let mut samples = vec![sample(&problem, &state)?];
    let mut steps = 0;
    let done = |state: &FieldState, steps: usize| match cfg.max_steps {
        Some(max) => steps >= max,
        None => state.t >= cfg.t_end - 1e-14 * cfg.t_end.abs().max(1.0),
    };
    while !done(&state, steps) {
        let t_end = if cfg.max_steps.is_some() {
            f64::INFINITY
        } else {
            cfg.t_end
        };
        state = step(&problem, &state, &cfg.stepper, t_end)?;
        steps += 1;
        if steps % cfg.output_every == 0 || done(&state, steps) {
            samples.push(sample(&problem, &state)?);
        }
    }
    Ok(RunResult {
        samples,
        steps,
        nodes: problem.nodes().to_vec(),
        final_state: state,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub sizes: Vec<usize>,
    pub l2_errors: Vec<f64>,
    /// `log2(e(n_k) / e(n_{k+1})) / log2(n_{k+1} / n_k)` for consecutive sizes.
    pub orders: Vec<f64>,
}

/// Runs the configuration at each grid size and reports observed orders.
pub fn convergence_study(cfg: &SimConfig, sizes: &[usize]) -> Result<ConvergenceStudy> {
    let mut errors = Vec::new();
    for &n in sizes {
        let mut c = cfg.clone();
        c.grid.n = n;
        c.convergence = None;
        c.expect = None;
        let r = run(&c)?;
        errors.push(
            r.last()
                .l2_error
                .ok_or_else(|| config_err("boundary", "convergence needs an exact solution"))?,
        );
    }
    let orders = sizes
        .windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| (e[0] / e[1]).log2() / ((n[1] as f64 + 1.0) / (n[0] as f64 + 1.0)).log2())
        .collect();
    Ok(ConvergenceStudy {
        sizes: sizes.to_vec(),
        l2_errors: errors,
        orders,
    })
}
