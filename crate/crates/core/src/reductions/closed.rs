use super::catalog::pde_residual_of;
use super::{p, Method, ReductionError, ResidualReport, Result};
use crate::liesym::NonlinearityFamily;
use crate::symexpr::{relative_value, Env, Poly, Rational, Symbol};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionId {
    RationalTwM1,
    WaitingTimePower,
    BlowupExp,
    Constant,
    Zero,
}

impl SolutionId {
    pub const ALL: [SolutionId; 5] = [
        SolutionId::RationalTwM1,
        SolutionId::WaitingTimePower,
        SolutionId::BlowupExp,
        SolutionId::Constant,
        SolutionId::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolutionId::RationalTwM1 => "rational_tw_m1",
            SolutionId::WaitingTimePower => "waiting_time_power",
            SolutionId::BlowupExp => "blowup_exp",
            SolutionId::Constant => "constant",
            SolutionId::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| ReductionError::Unknown {
                kind: "solution",
                name: s.into(),
            })
    }

    /// Parameter names and the three admissible sets used for residual checks.
    pub fn parameter_sets(self) -> Vec<BTreeMap<String, f64>> {
        let sets: Vec<Vec<(&str, f64)>> = match self {
            SolutionId::RationalTwM1 => vec![
                vec![
                    ("alpha", 2.0),
                    ("c0", 1.0),
                    ("c1", 0.0),
                    ("c2", 0.0),
                    ("c3", 0.0),
                    ("c4", 0.0),
                ],
                vec![
                    ("alpha", -0.5),
                    ("c0", 3.0),
                    ("c1", 1.0),
                    ("c2", -2.0),
                    ("c3", 0.5),
                    ("c4", 0.25),
                ],
                vec![
                    ("alpha", 1.5),
                    ("c0", 10.0),
                    ("c1", -1.0),
                    ("c2", 0.0),
                    ("c3", 2.0),
                    ("c4", -0.75),
                ],
            ],
            SolutionId::WaitingTimePower => vec![
                vec![("m", 1.0), ("t0", 1.0)],
                vec![("m", -1.0), ("t0", 0.5)],
                vec![("m", 5.0), ("t0", 2.0)],
            ],
            SolutionId::BlowupExp => vec![
                vec![("lambda", 1.0), ("x0", 0.0), ("t0", 1.0)],
                vec![("lambda", 2.5), ("x0", -0.5), ("t0", 0.25)],
                vec![("lambda", -0.75), ("x0", 1.0), ("t0", 3.0)],
            ],
            SolutionId::Constant => vec![vec![("c", 1.0)], vec![("c", -2.0)], vec![("c", 0.125)]],
            SolutionId::Zero => vec![vec![], vec![], vec![]],
        };
        sets.into_iter()
            .map(|s| s.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
            .collect()
    }
}

impl fmt::Display for SolutionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a piece of a solution is valid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    All,
    /// `x >= 0` and `m (t0 - t) K > 0`, with `K` the sign-carrying constant.
    WaitingSupport {
        sign: f64,
        t0: f64,
    },
    /// `x < 0`, any time where the support piece exists.
    WaitingVoid {
        sign: f64,
        t0: f64,
    },
    /// `t < t0`, `x != x0` and `(x - x0)^6 <= 144 (t0 - t)`.
    BlowUp {
        x0: f64,
        t0: f64,
    },
}

impl Region {
    fn contains(&self, t: f64, x: f64) -> bool {
        match *self {
            Region::All => true,
            Region::WaitingSupport { sign, t0 } => x >= 0.0 && sign * (t0 - t) > 0.0,
            Region::WaitingVoid { sign, t0 } => x < 0.0 && sign * (t0 - t) > 0.0,
            Region::BlowUp { x0, t0 } => t < t0 && x != x0 && (x - x0).powi(6) <= 144.0 * (t0 - t),
        }
    }

    /// A point well inside the region: away from `x = 0`, `x = x0`, the
    /// blow-up time and the edge of the validity domain.
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match *self {
            Region::All => (rng.gen_range(0.0..2.0), rng.gen_range(-3.0..3.0)),
            Region::WaitingSupport { sign, t0 } | Region::WaitingVoid { sign, t0 } => {
                let gap = rng.gen_range(0.1..1.0);
                let t = if sign > 0.0 { t0 - gap } else { t0 + gap };
                let x = rng.gen_range(0.1..3.0);
                (
                    t,
                    if matches!(self, Region::WaitingVoid { .. }) {
                        -x
                    } else {
                        x
                    },
                )
            }
            Region::BlowUp { x0, t0 } => {
                let t = t0 - rng.gen_range(0.02..1.0) * t0.abs().max(0.1);
                let reach = (144.0 * (t0 - t)).powf(1.0 / 6.0);
                let r = rng.gen_range(0.05..0.95) * reach;
                (t, if rng.gen_bool(0.5) { x0 + r } else { x0 - r })
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Piece {
    pub region: Region,
    /// Value with parameters left symbolic.
    #[serde(serialize_with = "display")]
    pub value: Poly,
}

fn display<T: fmt::Display, S: serde::Serializer>(
    v: &T,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// An exact invariant solution with bound parameters.
#[derive(Clone, Debug, Serialize)]
pub struct ClosedFormSolution {
    pub id: SolutionId,
    #[serde(serialize_with = "display")]
    pub family: NonlinearityFamily,
    pub params: BTreeMap<String, f64>,
    pub pieces: Vec<Piece>,
}

impl ClosedFormSolution {
    pub fn env(&self) -> Env {
        let mut env = Env::new();
        for (k, v) in &self.params {
            env.set(Symbol::param(k), *v);
        }
        env
    }

    pub fn in_domain(&self, t: f64, x: f64) -> bool {
        self.pieces.iter().any(|pc| pc.region.contains(t, x))
    }

    /// `u(t, x)`, or an error outside the validity domain.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        let piece = self
            .pieces
            .iter()
            .find(|pc| pc.region.contains(t, x))
            .ok_or_else(|| {
                ReductionError::Inadmissible(format!(
                    "({t}, {x}) is outside the domain of {}",
                    self.id
                ))
            })?;
        let env = self.env().with(Symbol::t(), t).with(Symbol::x(), x);
        Ok(piece.value.eval(&env)?)
    }
}

fn get(params: &BTreeMap<String, f64>, name: &str) -> Result<f64> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| ReductionError::Inadmissible(format!("missing parameter `{name}`")))
}

/// `prod_{k=-4}^{1} (6/m + k)`.
pub fn waiting_time_product(m: f64) -> f64 {
    (-4..=1).map(|k| 6.0 / m + k as f64).product()
}

/// Values of `m` for which the waiting-time solution does not exist: the
/// product vanishes at 3/2, 2, 3, 6 and also at -6.
pub const WAITING_TIME_EXCLUDED: [f64; 5] = [1.5, 2.0, 3.0, 6.0, -6.0];

/// Builds the closed-form solution `id` with the given parameters.
pub fn closed_form(id: SolutionId, params: &BTreeMap<String, f64>) -> Result<ClosedFormSolution> {
    let all = |v: Poly| {
        vec![Piece {
            region: Region::All,
            value: v,
        }]
    };
    let (family, pieces) = match id {
        SolutionId::RationalTwM1 => {
            for name in ["alpha", "c0", "c1", "c2", "c3", "c4"] {
                get(params, name)?;
            }
            let v = p(
                "-(alpha/120)*(x - alpha*t)^5 + c4*(x - alpha*t)^4 + c3*(x - alpha*t)^3 \
                       + c2*(x - alpha*t)^2 + c1*(x - alpha*t) + c0",
            )?;
            (NonlinearityFamily::power(Poly::one())?, all(v))
        }
        SolutionId::WaitingTimePower => {
            let m = get(params, "m")?;
            let t0 = get(params, "t0")?;
            if m == 0.0 || !m.is_finite() {
                return Err(ReductionError::Inadmissible(
                    "waiting-time solution needs m != 0".into(),
                ));
            }
            if let Some(bad) = WAITING_TIME_EXCLUDED
                .iter()
                .find(|&&b| (m - b).abs() < 1e-12)
            {
                return Err(ReductionError::Inadmissible(format!(
                    "waiting-time solution needs prod(6/m + k) != 0, which fails at m = {bad}"
                )));
            }
            let sign = (m * waiting_time_product(m)).signum();
            let product: Vec<String> = (-4..=1).map(|k| format!("(6/m + ({k}))")).collect();
            let v = p(&format!(
                "x^(6/m)*(m*(t0 - t)*{})^(-1/m)",
                product.join("*")
            ))?;
            (
                NonlinearityFamily::power(Poly::param("m"))?,
                vec![
                    Piece {
                        region: Region::WaitingSupport { sign, t0 },
                        value: v,
                    },
                    Piece {
                        region: Region::WaitingVoid { sign, t0 },
                        value: Poly::zero(),
                    },
                ],
            )
        }
        SolutionId::BlowupExp => {
            let lambda = get(params, "lambda")?;
            if lambda == 0.0 {
                return Err(ReductionError::Inadmissible(
                    "blow-up solution needs lambda != 0".into(),
                ));
            }
            let x0 = get(params, "x0")?;
            let t0 = get(params, "t0")?;
            // ln((x - x0)^6 / (144 (t0 - t))) with the logarithm split by hand.
            let v = p("(6*ln(abs(x - x0)) - ln(144) - ln(t0 - t))/lambda")?;
            (
                NonlinearityFamily::exponential(Poly::param("lambda"))?,
                vec![Piece {
                    region: Region::BlowUp { x0, t0 },
                    value: v,
                }],
            )
        }
        SolutionId::Constant => {
            get(params, "c")?;
            (NonlinearityFamily::Arbitrary, all(Poly::param("c")))
        }
        SolutionId::Zero => (NonlinearityFamily::Arbitrary, all(Poly::zero())),
    };
    Ok(ClosedFormSolution {
        id,
        family,
        params: params.clone(),
        pieces,
    })
}

/// Binds parameters exactly. Finite `f64` values are dyadic rationals.
fn bind_exact(p: &Poly, params: &BTreeMap<String, f64>) -> Result<Poly> {
    let mut out = p.clone();
    for (k, v) in params {
        let r = Rational::from_float(*v).ok_or_else(|| {
            ReductionError::Inadmissible(format!("parameter {k} = {v} is not finite"))
        })?;
        out = out.subs(&Symbol::param(k), &Poly::constant(r))?;
    }
    Ok(out)
}

/// Evaluates `u_t - (f(u) u_xxxxx)_x` on each piece at `n_points` interior
/// points. A piece whose residual normalizes to zero (with symbolic or with
/// exactly bound parameters) contributes 0; otherwise the relative residual
/// `|sum of terms| / sum |terms|` is sampled.
pub fn pde_residual(
    sol: &ClosedFormSolution,
    n_points: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ResidualReport> {
    let env = sol.env();
    let mut worst: f64 = 0.0;
    let mut symbolic = true;
    let mut notes = Vec::new();
    for piece in &sol.pieces {
        let mut res = pde_residual_of(&piece.value, &sol.family)?;
        if !(res.is_zero() || res.is_zero_cleared()) {
            res = bind_exact(&res, &sol.params)?;
        }
        let closed = res.is_zero() || res.is_zero_cleared();
        notes.push(if closed {
            "symbolic zero".to_string()
        } else {
            "sampled".to_string()
        });
        symbolic &= closed;
        let per_piece = n_points.div_ceil(sol.pieces.len());
        for _ in 0..per_piece {
            let (t, x) = piece.region.sample(rng);
            if !piece.region.contains(t, x) {
                return Err(ReductionError::NoSamples(format!(
                    "{} at ({t}, {x})",
                    sol.id
                )));
            }
            // The value must be defined at every sample, even when the residual closed.
            let at = env.clone().with(Symbol::t(), t).with(Symbol::x(), x);
            let u = piece.value.eval(&at)?;
            if !u.is_finite() {
                return Err(ReductionError::Inadmissible(format!(
                    "{} undefined at ({t}, {x})",
                    sol.id
                )));
            }
            if !closed {
                worst = worst.max(relative_value(&res, &at)?);
            }
        }
    }
    let params: Vec<String> = sol.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(ResidualReport {
        id: format!("{}[{}]", sol.id, params.join(",")),
        passed: worst < 1e-9,
        method: if symbolic {
            Method::Symbolic
        } else {
            Method::Sampled
        },
        max_residual: worst,
        points: n_points,
        detail: notes.join("; "),
    })
}
