//! Group classification of `u_t = (f(u) u_xxxxx)_x`: the three symmetry
//! cases, their commutator tables and optimal systems, the equivalence
//! algebra and the finite equivalence transformations.

use crate::jetcalc::{self, flux_rhs, prolong, total_derivative, Dir, JetError, VectorField};
use crate::symexpr::{self, rat, Atom, Exponent, Poly, Rational, SymError, Symbol};
use num_traits::{One, Zero};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("inadmissible family: {0}")]
    Inadmissible(String),
    #[error("transformation breaks the form of the family: {0}")]
    FormBreaking(String),
    #[error("commutator `{0}` is not in the span of the generators")]
    NotClosed(String),
    #[error("cannot parse family `{0}`: expected arbitrary, exp[:lambda=..], power[:m=..] or explicit:<expr in u>")]
    BadFamily(String),
}

pub type Result<T> = std::result::Result<T, LieError>;

fn p(s: &str) -> Poly {
    symexpr::poly(s).expect("internal expression")
}

/// The nonlinearity `f(u)` up to equivalence.
#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearityFamily {
    Arbitrary,
    /// `scale * e^(lambda*u)`.
    Exponential {
        lambda: Poly,
        scale: Poly,
    },
    /// `scale * u^m`.
    Power {
        m: Poly,
        scale: Poly,
    },
    /// A concrete function of `u`.
    Explicit {
        f: Poly,
    },
}

impl NonlinearityFamily {
    pub fn exponential(lambda: Poly) -> Result<Self> {
        let fam = NonlinearityFamily::Exponential {
            lambda,
            scale: Poly::one(),
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn power(m: Poly) -> Result<Self> {
        let fam = NonlinearityFamily::Power {
            m,
            scale: Poly::one(),
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn explicit(f: Poly) -> Result<Self> {
        let fam = NonlinearityFamily::Explicit { f };
        fam.validate()?;
        Ok(fam)
    }

    /// Exponential family with symbolic `lambda`.
    pub fn exponential_symbolic() -> Self {
        NonlinearityFamily::Exponential {
            lambda: Poly::param("lambda"),
            scale: Poly::one(),
        }
    }

    /// Power family with symbolic `m`.
    pub fn power_symbolic() -> Self {
        NonlinearityFamily::Power {
            m: Poly::param("m"),
            scale: Poly::one(),
        }
    }

    /// Parses `arbitrary`, `exp`, `exp:lambda=2`, `power`, `power:m=3` or
    /// `explicit:u*e^(-u)`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, rest) = match spec.split_once(':') {
            Some((h, r)) => (h.trim(), Some(r.trim())),
            None => (spec, None),
        };
        let value = |key: &str| -> Result<Option<Poly>> {
            match rest {
                None => Ok(None),
                Some(r) => {
                    let (k, v) = r
                        .split_once('=')
                        .ok_or_else(|| LieError::BadFamily(spec.into()))?;
                    if k.trim() != key {
                        return Err(LieError::BadFamily(spec.into()));
                    }
                    Ok(Some(symexpr::poly(v.trim())?))
                }
            }
        };
        match head {
            "arbitrary" if rest.is_none() => Ok(NonlinearityFamily::Arbitrary),
            "exp" | "exponential" => match value("lambda")? {
                Some(l) => NonlinearityFamily::exponential(l),
                None => Ok(NonlinearityFamily::exponential_symbolic()),
            },
            "power" => match value("m")? {
                Some(m) => NonlinearityFamily::power(m),
                None => Ok(NonlinearityFamily::power_symbolic()),
            },
            "explicit" => {
                let f = symexpr::poly(rest.ok_or_else(|| LieError::BadFamily(spec.into()))?)?;
                NonlinearityFamily::explicit(f)
            }
            _ => Err(LieError::BadFamily(spec.into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NonlinearityFamily::Arbitrary => Ok(()),
            NonlinearityFamily::Exponential { lambda, scale } => {
                if lambda.is_zero() {
                    return Err(LieError::Inadmissible("lambda must be nonzero".into()));
                }
                if scale.is_zero() {
                    return Err(LieError::Inadmissible("scale must be nonzero".into()));
                }
                Ok(())
            }
            NonlinearityFamily::Power { m, scale } => {
                if m.is_zero() {
                    return Err(LieError::Inadmissible(
                        "m must be nonzero (otherwise the equation is linear)".into(),
                    ));
                }
                if scale.is_zero() {
                    return Err(LieError::Inadmissible("scale must be nonzero".into()));
                }
                Ok(())
            }
            NonlinearityFamily::Explicit { f } => {
                let stray: Vec<String> = f
                    .free_symbols()
                    .into_iter()
                    .filter(|s| *s != Symbol::u())
                    .map(|s| s.to_string())
                    .collect();
                if !stray.is_empty() || !f.applications().is_empty() {
                    return Err(LieError::Inadmissible(format!(
                        "explicit f must be a concrete function of u alone, found {}",
                        if stray.is_empty() {
                            "opaque functions".into()
                        } else {
                            stray.join(", ")
                        }
                    )));
                }
                if f.diff(&Symbol::u())?.is_zero() {
                    return Err(LieError::Inadmissible(
                        "f' must not vanish identically".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `f(u)` as an expression in `u`; opaque for the arbitrary family.
    pub fn f_expr(&self) -> Poly {
        match self {
            NonlinearityFamily::Arbitrary => p("f(u)"),
            NonlinearityFamily::Exponential { lambda, scale } => {
                scale * &(lambda * &Poly::jet(0, 0)).exp()
            }
            NonlinearityFamily::Power { m, scale } => {
                scale
                    * &Poly::jet(0, 0)
                        .pow(&Exponent::from_poly(m.clone()).expect("parameter exponent"))
                        .expect("u^m")
            }
            NonlinearityFamily::Explicit { f } => f.clone(),
        }
    }

    /// `f` evaluated at another argument.
    pub fn f_at(&self, arg: &Poly) -> Result<Poly> {
        Ok(self.f_expr().subs(&Symbol::u(), arg)?)
    }

    pub fn label(&self) -> String {
        match self {
            NonlinearityFamily::Arbitrary => "arbitrary".into(),
            NonlinearityFamily::Exponential { .. } => "exponential".into(),
            NonlinearityFamily::Power { .. } => "power".into(),
            NonlinearityFamily::Explicit { .. } => "explicit".into(),
        }
    }

    /// Invariance residual of `q` for this nonlinearity.
    pub fn invariance_residual(&self, q: &VectorField) -> Result<Poly> {
        Ok(jetcalc::invariance_residual(q, &self.f_expr())?)
    }
}

impl fmt::Display for NonlinearityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: f(u) = {}", self.label(), self.f_expr())
    }
}

impl Serialize for NonlinearityFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("NonlinearityFamily", 2)?;
        st.serialize_field("kind", &self.label())?;
        st.serialize_field("f", &self.f_expr().to_string())?;
        st.end()
    }
}

// ---------------------------------------------------------------------------
// Commutators and structure constants

/// `[a, b]` with coefficients `a(b^k) - b(a^k)` over all coordinates.
pub fn commutator(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    let comp = |ca: &Poly, cb: &Poly| -> Result<Poly> { Ok(&a.apply_to(cb)? - &b.apply_to(ca)?) };
    let mut out = VectorField::new(
        comp(&a.tau, &b.tau)?,
        comp(&a.xi, &b.xi)?,
        comp(&a.phi, &b.phi)?,
    );
    if a.psi.is_some() || b.psi.is_some() {
        let pa = a.psi.clone().unwrap_or_default();
        let pb = b.psi.clone().unwrap_or_default();
        out.psi = Some(comp(&pa, &pb)?);
    }
    Ok(out)
}

fn is_coordinate(a: &Atom) -> bool {
    matches!(a, Atom::Sym(s) if !s.is_param())
}

/// Linear equations `sum_k c_k Q_k = target` over the monomials in `(t, x, u, f)`.
fn span_equations(basis: &[VectorField], target: &VectorField) -> Vec<(Vec<Poly>, Poly)> {
    let comps = |v: &VectorField| -> Vec<Poly> {
        vec![
            v.tau.clone(),
            v.xi.clone(),
            v.phi.clone(),
            v.psi.clone().unwrap_or_default(),
        ]
    };
    let tgt = comps(target);
    let bases: Vec<Vec<Poly>> = basis.iter().map(comps).collect();
    let mut rows = Vec::new();
    for c in 0..4 {
        let mut keys = std::collections::BTreeSet::new();
        let t_coll = tgt[c].collect(is_coordinate);
        keys.extend(t_coll.keys().cloned());
        let b_coll: Vec<_> = bases.iter().map(|b| b[c].collect(is_coordinate)).collect();
        for bc in &b_coll {
            keys.extend(bc.keys().cloned());
        }
        for key in keys {
            let row = b_coll
                .iter()
                .map(|bc| bc.get(&key).cloned().unwrap_or_default())
                .collect();
            rows.push((row, t_coll.get(&key).cloned().unwrap_or_default()));
        }
    }
    rows
}

/// Generic rational sample values for parameters, used to solve for
/// structure constants before verifying them symbolically.
fn sample_bindings(polys: &[&Poly]) -> BTreeMap<Atom, Poly> {
    let primes = [7i64, 11, 13, 17, 19, 23, 29, 31];
    let mut map = BTreeMap::new();
    let mut i = 0;
    for poly in polys {
        for s in poly.free_symbols() {
            if s.is_param() {
                map.entry(Atom::Sym(s)).or_insert_with(|| {
                    i += 1;
                    Poly::constant(crate::symexpr::ratio(
                        primes[i % primes.len()],
                        5 + i as i64,
                    ))
                });
            }
        }
    }
    map
}

/// Coordinates of `target` in the span of `basis`, with constant
/// (parameter-free) coefficients, verified symbolically.
pub fn decompose(basis: &[VectorField], target: &VectorField) -> Result<Vec<Rational>> {
    let rows = span_equations(basis, target);
    let all: Vec<&Poly> = rows
        .iter()
        .flat_map(|(r, t)| r.iter().chain(std::iter::once(t)))
        .collect();
    let bind = sample_bindings(&all);
    let mut matrix = Vec::new();
    for (row, t) in &rows {
        let mut r = Vec::new();
        for e in row.iter().chain(std::iter::once(t)) {
            let v = e.subs_many(&bind)?;
            match v.as_constant() {
                Some(c) => r.push(c),
                None => return Err(LieError::NotClosed(target.to_string())),
            }
        }
        matrix.push(r);
    }
    let sol =
        solve_exact(matrix, basis.len()).ok_or_else(|| LieError::NotClosed(target.to_string()))?;
    let mut recon = VectorField::zero();
    if target.psi.is_some() {
        recon.psi = Some(Poly::zero());
    }
    for (c, b) in sol.iter().zip(basis) {
        recon = recon.add(&b.scale(&Poly::constant(c.clone())));
    }
    if !recon.sub(target).is_zero() {
        return Err(LieError::NotClosed(target.to_string()));
    }
    Ok(sol)
}

/// Solves an augmented system `[A | b]` exactly; `None` if inconsistent.
/// Free unknowns are set to zero.
pub(crate) fn solve_exact(mut m: Vec<Vec<Rational>>, n: usize) -> Option<Vec<Rational>> {
    let pivots = rref(&mut m, n);
    for row in &m {
        if row[..n].iter().all(Zero::is_zero) && !row[n].is_zero() {
            return None;
        }
    }
    let mut x = vec![Rational::zero(); n];
    for (r, c) in pivots.iter().enumerate() {
        x[*c] = m[r][n].clone();
    }
    Some(x)
}

/// Reduced row echelon form over the first `n` columns; returns pivot columns.
fn rref(m: &mut [Vec<Rational>], n: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n {
        let Some(pr) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, pr);
        let inv = m[r][c].recip();
        for v in m[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let k = m[i][c].clone();
                let pivot_row = m[r].clone();
                for (v, pv) in m[i].iter_mut().zip(&pivot_row) {
                    *v -= &k * pv;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == m.len() {
            break;
        }
    }
    pivots
}

/// Basis of the null space of the matrix with `n` columns.
pub(crate) fn nullspace(mut m: Vec<Vec<Rational>>, n: usize) -> Vec<Vec<Rational>> {
    for row in m.iter_mut() {
        row.push(Rational::zero());
    }
    let pivots = rref(&mut m, n);
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&fc| {
            let mut v = vec![Rational::zero(); n];
            v[fc] = Rational::one();
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[r][fc].clone();
            }
            v
        })
        .collect()
}

/// `c[i][j][k]` with `[Q_i, Q_j] = sum_k c[i][j][k] Q_k`.
pub type StructureConstants = Vec<Vec<Vec<Rational>>>;

pub fn structure_constants(gens: &[VectorField]) -> Result<StructureConstants> {
    let n = gens.len();
    let mut c = vec![vec![vec![Rational::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i < j {
                let br = commutator(&gens[i], &gens[j])?;
                c[i][j] = decompose(gens, &br)?;
                c[j][i] = c[i][j].iter().map(|v| -v).collect();
            }
        }
    }
    Ok(c)
}

/// Cyclic sum `[[a,b],c] + [[b,c],a] + [[c,a],b]`.
pub fn jacobi(a: &VectorField, b: &VectorField, c: &VectorField) -> Result<VectorField> {
    let t1 = commutator(&commutator(a, b)?, c)?;
    let t2 = commutator(&commutator(b, c)?, a)?;
    let t3 = commutator(&commutator(c, a)?, b)?;
    Ok(t1.add(&t2).add(&t3))
}

// ---------------------------------------------------------------------------
// Classification

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationCase {
    pub family: NonlinearityFamily,
    pub labels: Vec<String>,
    pub generators: Vec<VectorField>,
    pub algebra: String,
    #[serde(serialize_with = "ser_structure")]
    pub structure: StructureConstants,
}

fn ser_structure<S: serde::Serializer>(
    c: &StructureConstants,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let strs: Vec<Vec<Vec<String>>> = c
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| v.iter().map(|x| x.to_string()).collect())
                .collect()
        })
        .collect();
    strs.serialize(s)
}

impl ClassificationCase {
    /// Nonzero brackets as strings like `[Q1, Q3] = Q1`.
    pub fn commutator_table(&self) -> Vec<String> {
        let n = self.generators.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let terms: Vec<String> = self.structure[i][j]
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(k, c)| {
                        if c.is_one() {
                            self.labels[k].clone()
                        } else {
                            format!("({c})*{}", self.labels[k])
                        }
                    })
                    .collect();
                let rhs = if terms.is_empty() {
                    "0".to_string()
                } else {
                    terms.join(" + ")
                };
                out.push(format!(
                    "[{}, {}] = {}",
                    self.labels[i], self.labels[j], rhs
                ));
            }
        }
        out
    }

    pub fn generator(&self, label: &str) -> Option<&VectorField> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| &self.generators[i])
    }
}

fn field(tau: &str, xi: &str, phi: &str) -> VectorField {
    VectorField::parse(tau, xi, phi).expect("internal generator")
}

/// Symmetry algebra of the equation for the given nonlinearity.
pub fn classify(family: &NonlinearityFamily) -> Result<ClassificationCase> {
    family.validate()?;
    let (generators, algebra) = match family {
        NonlinearityFamily::Arbitrary => (case1_generators(), "A_{3,5}^a with a = 1/6".to_string()),
        NonlinearityFamily::Exponential { lambda, .. } => {
            let l = lambda.recip()?;
            let gens = vec![
                VectorField::new(-Poly::var("t"), Poly::zero(), l.clone()),
                field("1", "0", "0"),
                VectorField::new(Poly::zero(), -Poly::var("x"), l.scale(&rat(-6))),
                field("0", "1", "0"),
            ];
            (gens, "2A_2".to_string())
        }
        NonlinearityFamily::Power { m, .. } => {
            let l = m.recip()?;
            let u = Poly::jet(0, 0);
            let gens = vec![
                VectorField::new(-Poly::var("t"), Poly::zero(), &l * &u),
                field("1", "0", "0"),
                VectorField::new(Poly::zero(), -Poly::var("x"), &l.scale(&rat(-6)) * &u),
                field("0", "1", "0"),
            ];
            (gens, "2A_2".to_string())
        }
        NonlinearityFamily::Explicit { f } => {
            let mut gens = case1_generators();
            for g in explicit_extra_generators(f)? {
                gens.push(g);
            }
            let name = match gens.len() {
                3 => "A_{3,5}^a with a = 1/6".to_string(),
                n => format!("{n}-dimensional"),
            };
            (gens, name)
        }
    };
    let labels = (1..=generators.len()).map(|i| format!("Q{i}")).collect();
    let structure = structure_constants(&generators)?;
    Ok(ClassificationCase {
        family: family.clone(),
        labels,
        generators,
        algebra,
        structure,
    })
}

fn case1_generators() -> Vec<VectorField> {
    vec![
        field("1", "0", "0"),
        field("0", "1", "0"),
        field("t", "x/6", "0"),
    ]
}

/// For explicit `f`, solves `A f + p u f' + q f' = 0` (the classifying
/// equation with `A = c - 6a`) for constant `(A, p, q)` and returns one
/// generator `A t d_t + (p u + q) d_u` per independent solution.
fn explicit_extra_generators(f: &Poly) -> Result<Vec<VectorField>> {
    let u = Poly::jet(0, 0);
    let f1 = f.diff(&Symbol::u())?;
    let cols = [f.clone(), &u * &f1, f1.clone()];
    let colls: Vec<BTreeMap<_, Poly>> = cols
        .iter()
        .map(|c| c.collect(|a| !matches!(a, Atom::Prime(_))))
        .collect();
    let mut keys = std::collections::BTreeSet::new();
    for c in &colls {
        keys.extend(c.keys().cloned());
    }
    let mut matrix = Vec::new();
    for k in keys {
        let mut row = Vec::new();
        for c in &colls {
            let v = c.get(&k).cloned().unwrap_or_default();
            row.push(
                v.as_constant().ok_or_else(|| {
                    LieError::Inadmissible(format!("non-numeric coefficient {v}"))
                })?,
            );
        }
        matrix.push(row);
    }
    let mut out = Vec::new();
    for v in nullspace(matrix, 3) {
        let (a, pp, q) = (
            Poly::constant(v[0].clone()),
            Poly::constant(v[1].clone()),
            Poly::constant(v[2].clone()),
        );
        let g = VectorField::new(&a * &Poly::var("t"), Poly::zero(), &pp * &u + q);
        // Guard against spurious solutions when the canonical form is not unique.
        let res = jetcalc::invariance_residual(&g, f)?;
        if res.is_zero() || res.is_zero_cleared() {
            out.push(g);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Optimal systems

#[derive(Clone, Debug, Serialize)]
pub struct Subalgebra {
    pub label: String,
    pub field: VectorField,
}

/// One-dimensional optimal system with symbolic `alpha`.
pub fn optimal_system(case: &ClassificationCase) -> Vec<Subalgebra> {
    let alpha = Poly::param("alpha");
    let g = |l: &str| case.generator(l).expect("generator").clone();
    let comb = |a: &str, b: &str| Subalgebra {
        label: format!("{a}+alpha*{b}"),
        field: g(a).add(&g(b).scale(&alpha)),
    };
    let single = |a: &str| Subalgebra {
        label: a.to_string(),
        field: g(a),
    };
    match case.generators.len() {
        3 => vec![single("Q1"), single("Q2"), single("Q3"), comb("Q1", "Q2")],
        _ => vec![
            single("Q2"),
            single("Q3"),
            single("Q4"),
            comb("Q1", "Q3"),
            comb("Q1", "Q4"),
            comb("Q2", "Q4"),
            comb("Q2", "Q3"),
        ],
    }
}

// ---------------------------------------------------------------------------
// Equivalence algebra and group

/// Operators spanning the equivalence algebra, acting on `(t, x, u, f)`.
pub fn equivalence_algebra() -> Vec<(String, VectorField)> {
    let op = |label: &str, tau: &str, xi: &str, phi: &str, psi: &str| {
        (label.to_string(), field(tau, xi, phi).with_psi(p(psi)))
    };
    vec![
        op("d_t", "1", "0", "0", "0"),
        op("d_x", "0", "1", "0", "0"),
        op("d_u", "0", "0", "1", "0"),
        op("t*d_t - f*d_f", "t", "0", "0", "-f"),
        op("x*d_x + 6*f*d_f", "0", "x", "0", "6*f"),
        op("u*d_u", "0", "0", "u", "0"),
    ]
}

/// Residuals of the extended criterion for an operator on `(t, x, u, f)`:
/// the main equation and the two conditions from `f_t = f_x = 0`.
#[derive(Clone, Debug)]
pub struct ExtendedResidual {
    pub main: Poly,
    pub psi_t: Poly,
    pub psi_x: Poly,
}

impl ExtendedResidual {
    pub fn is_zero(&self) -> bool {
        self.main.is_zero() && self.psi_t.is_zero() && self.psi_x.is_zero()
    }
}

/// Extended criterion for the system `u_t = f_u u_x u_5 + f u_6, f_t = f_x = 0`
/// with `f` a function of `u` on the solution set.
pub fn extended_residual(x: &VectorField) -> Result<ExtendedResidual> {
    let psi = x.psi.clone().unwrap_or_default();
    let fvar = Symbol::var("f");
    let u = Symbol::u();
    let fu = p("f(u)");
    let f1 = p("df1(u)");
    let on_f = |e: &Poly| -> Result<Poly> { Ok(e.subs(&fvar, &fu)?) };
    let point = VectorField::new(x.tau.clone(), x.xi.clone(), x.phi.clone());
    let pr = prolong(&point, 6)?;
    let psi_u = &(&psi.diff(&u)? + &(&f1 * &psi.diff(&fvar)?)) - &(&f1 * &x.phi.diff(&u)?);
    let psi_t = &psi.diff(&Symbol::t())? - &(&f1 * &x.phi.diff(&Symbol::t())?);
    let psi_x = &psi.diff(&Symbol::x())? - &(&f1 * &x.phi.diff(&Symbol::x())?);
    let (ux, u5, u6) = (Poly::jet(0, 1), Poly::jet(0, 5), Poly::jet(0, 6));
    let mut rhs = &(&ux * &u5) * &on_f(&psi_u)?;
    rhs = rhs + &(&f1 * &u5) * &pr[&(0, 1)];
    rhs = rhs + &(&f1 * &ux) * &pr[&(0, 5)];
    rhs = rhs + &u6 * &on_f(&psi)?;
    rhs = rhs + &fu * &pr[&(0, 6)];
    let crit = &pr[&(1, 0)] - &rhs;
    let flux = flux_rhs(&fu)?;
    let mut map = BTreeMap::new();
    map.insert(Atom::Sym(Symbol::jet(1, 0)), flux.clone());
    map.insert(
        Atom::Sym(Symbol::jet(1, 1)),
        total_derivative(&flux, Dir::X)?,
    );
    Ok(ExtendedResidual {
        main: crit.subs_many(&map)?,
        psi_t: on_f(&psi_t)?,
        psi_x: on_f(&psi_x)?,
    })
}

/// `t -> eps4 t + eps1, x -> eps5 x + eps2, u -> eps6 u + eps3,
/// f -> f eps5^6 / eps4`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceTransform {
    pub eps: [Poly; 6],
}

impl EquivalenceTransform {
    pub fn new(eps: [Poly; 6]) -> Result<Self> {
        for (i, name) in [(3, "eps4"), (4, "eps5"), (5, "eps6")] {
            if eps[i].is_zero() {
                return Err(LieError::Inadmissible(format!("{name} must be nonzero")));
            }
        }
        Ok(EquivalenceTransform { eps })
    }

    pub fn from_rationals(e: [Rational; 6]) -> Result<Self> {
        Self::new(e.map(Poly::constant))
    }

    pub fn identity() -> Self {
        EquivalenceTransform {
            eps: [0, 0, 0, 1, 1, 1].map(Poly::int),
        }
    }

    /// Fully symbolic transform with parameters `eps1..eps6`.
    pub fn symbolic() -> Self {
        EquivalenceTransform {
            eps: [1, 2, 3, 4, 5, 6].map(|i| Poly::param(&format!("eps{i}"))),
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &EquivalenceTransform) -> EquivalenceTransform {
        let d = &self.eps;
        let e = &first.eps;
        EquivalenceTransform {
            eps: [
                &(&d[3] * &e[0]) + &d[0],
                &(&d[4] * &e[1]) + &d[1],
                &(&d[5] * &e[2]) + &d[2],
                &d[3] * &e[3],
                &d[4] * &e[4],
                &d[5] * &e[5],
            ],
        }
    }

    /// `eps5^6 / eps4`.
    pub fn f_factor(&self) -> Result<Poly> {
        Ok(&self.eps[4].powi(6)? * &self.eps[3].recip()?)
    }

    /// Transformed nonlinearity as an expression in the new dependent
    /// variable `s`: `f~(s) = f((s - eps3)/eps6) eps5^6 / eps4`.
    pub fn transformed_f(&self, family: &NonlinearityFamily) -> Result<Poly> {
        let arg = &(&Poly::var("s") - &self.eps[2]) * &self.eps[5].recip()?;
        Ok(&family.f_at(&arg)? * &self.f_factor()?)
    }
}

/// Image of a family under an equivalence transformation.
pub fn apply_equivalence(
    t: &EquivalenceTransform,
    family: &NonlinearityFamily,
) -> Result<NonlinearityFamily> {
    let k = t.f_factor()?;
    match family {
        NonlinearityFamily::Arbitrary => Ok(NonlinearityFamily::Arbitrary),
        NonlinearityFamily::Power { m, scale } => {
            if !t.eps[2].is_zero() {
                return Err(LieError::FormBreaking(
                    "a shift of u (eps3 != 0) turns u^m into (u - eps3)^m".into(),
                ));
            }
            let e6 = t.eps[5]
                .pow(&Exponent::from_poly(-m.clone())?)
                .map_err(|_| {
                    LieError::FormBreaking(
                        "eps6 < 0 maps u > 0 to negative values where u^m is not real".into(),
                    )
                })?;
            Ok(NonlinearityFamily::Power {
                m: m.clone(),
                scale: &(scale * &k) * &e6,
            })
        }
        NonlinearityFamily::Exponential { lambda, scale } => {
            let inv6 = t.eps[5].recip()?;
            let new_lambda = lambda * &inv6;
            let shift = (&new_lambda * &t.eps[2]).scale(&rat(-1)).exp();
            Ok(NonlinearityFamily::Exponential {
                lambda: new_lambda,
                scale: &(scale * &k) * &shift,
            })
        }
        NonlinearityFamily::Explicit { .. } => {
            let f = t
                .transformed_f(family)?
                .subs(&Symbol::var("s"), &Poly::jet(0, 0))?;
            Ok(NonlinearityFamily::Explicit { f })
        }
    }
}

/// Checks that the transformed equation has the same form: with
/// `U = eps6 u + eps3`, `U_T = (eps6/eps4) u_t` and `U_{X^k} = eps6 eps5^-k u_{x^k}`,
/// the residual `U_T - (f~(U) U_XXXXX)_X` equals `(eps6/eps4)` times the
/// original residual. Also checks that [`apply_equivalence`] (when the
/// family keeps its form) produces the same `f~`.
pub fn verify_form_preservation(
    t: &EquivalenceTransform,
    family: &NonlinearityFamily,
) -> Result<bool> {
    let s = Symbol::var("s");
    let ft = t.transformed_f(family)?;
    let ft1 = ft.diff(&s)?;
    let big_u = &(&t.eps[5] * &Poly::jet(0, 0)) + &t.eps[2];
    let at_u = |e: &Poly| -> Result<Poly> { Ok(e.subs(&s, &big_u)?) };
    let jx = |k: u32| -> Result<Poly> {
        Ok(&(&t.eps[5] * &t.eps[4].powi(-(k as i64))?) * &Poly::jet(0, k))
    };
    let ut = &(&t.eps[5] * &t.eps[3].recip()?) * &Poly::jet(1, 0);
    let rhs_new = &(&(&at_u(&ft1)? * &jx(1)?) * &jx(5)?) + &(&at_u(&ft)? * &jx(6)?);
    let res_new = &ut - &rhs_new;
    let f = family.f_expr();
    let res_old = &Poly::jet(1, 0) - &flux_rhs(&f)?;
    let diff = &res_new - &(&(&t.eps[5] * &t.eps[3].recip()?) * &res_old);
    let mut ok = diff.is_zero() || diff.is_zero_cleared();
    if let Ok(img) = apply_equivalence(t, family) {
        if !matches!(family, NonlinearityFamily::Arbitrary) {
            let direct = img.f_expr().subs(&Symbol::u(), &Poly::var("s"))?;
            let d = &direct - &ft;
            ok &= d.is_zero() || d.is_zero_cleared();
        }
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rref_nullspace() {
        let m = vec![vec![rat(1), rat(2), rat(3)], vec![rat(2), rat(4), rat(6)]];
        let ns = nullspace(m, 3);
        assert_eq!(ns.len(), 2);
        let sol = solve_exact(
            vec![vec![rat(2), rat(1), rat(5)], vec![rat(1), rat(-1), rat(1)]],
            2,
        )
        .unwrap();
        assert_eq!(sol, vec![rat(2), rat(1)]);
        assert!(solve_exact(vec![vec![rat(1), rat(1)], vec![rat(1), rat(2)]], 1).is_none());
    }

    #[test]
    fn family_parsing() {
        assert_eq!(
            NonlinearityFamily::parse("arbitrary").unwrap(),
            NonlinearityFamily::Arbitrary
        );
        assert!(matches!(
            NonlinearityFamily::parse("power:m=3").unwrap(),
            NonlinearityFamily::Power { .. }
        ));
        assert!(matches!(
            NonlinearityFamily::parse("exp:lambda=2").unwrap(),
            NonlinearityFamily::Exponential { .. }
        ));
        assert!(matches!(
            NonlinearityFamily::parse("power:m=0"),
            Err(LieError::Inadmissible(_))
        ));
        assert!(matches!(
            NonlinearityFamily::parse("exp:lambda=0"),
            Err(LieError::Inadmissible(_))
        ));
        assert!(matches!(
            NonlinearityFamily::parse("explicit:3"),
            Err(LieError::Inadmissible(_))
        ));
        assert!(matches!(
            NonlinearityFamily::parse("cubic"),
            Err(LieError::BadFamily(_))
        ));
    }
}
