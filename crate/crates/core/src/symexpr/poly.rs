//! Canonical normal form.
//!
//! A [`Poly`] is a finite sum of monomials with exact rational coefficients.
//! A monomial is a product of atoms raised to exponents, where an exponent is
//! either an integer or a Laurent polynomial in the parameters (so `u^(m+1)`,
//! `t^((6*alpha-1)/m)` and `x^(6/m)` are all single factors). Atoms are
//! symbols, opaque function applications, logarithms, exponentials, prime
//! constants carrying a non-integer exponent, and polynomial bases that cannot
//! be expanded (negative or symbolic powers of a sum).
//!
//! Canonical rules applied on construction:
//! - equal atoms merge by adding exponents, zero exponents vanish;
//! - at most one `exp(..)` factor per monomial, `exp(A)*exp(B) = exp(A+B)`;
//! - `exp(c*ln(B))` with a parameter-only coefficient becomes `B^c`;
//! - non-negative integer powers of sums are expanded;
//! - constant bases with non-integer exponents are split into prime powers.
//!
//! Within this class two expressions are equal iff their normal forms are
//! structurally identical, except where negative powers of sums are involved;
//! [`Poly::is_zero_cleared`] covers that case by clearing those denominators.

use super::error::{Result, SymError};
use super::symbol::{Name, Symbol, MAX_F_ORDER, NONLINEARITY};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

pub type Rational = BigRational;

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// A prime number; only present with a non-integer exponent.
    Prime(BigInt),
    Sym(Symbol),
    /// Opaque function `func` with partial-derivative orders `derivs`, one per argument.
    Apply {
        func: Name,
        derivs: Vec<u32>,
        args: Vec<Poly>,
    },
    /// `ln(arg)`, or `ln|arg|` when `abs` is set.
    Ln {
        arg: Poly,
        abs: bool,
    },
    /// A sum with at least two terms, raised to a negative or symbolic power.
    Base(Poly),
    Exp(Poly),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Exponent {
    Int(i64),
    /// Non-integer exponent: a Laurent polynomial in the parameters.
    Gen(Poly),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(Atom, Exponent)>);

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

// ---------------------------------------------------------------------------
// Exponent

impl Exponent {
    pub fn one() -> Self {
        Exponent::Int(1)
    }

    pub fn from_rational(r: &Rational) -> Self {
        if r.is_integer() {
            if let Some(k) = r.to_integer().to_i64() {
                return Exponent::Int(k);
            }
        }
        Exponent::Gen(Poly::constant(r.clone()))
    }

    /// Builds an exponent from a parameter-only polynomial.
    pub fn from_poly(p: Poly) -> Result<Self> {
        if let Some(c) = p.as_constant() {
            return Ok(Exponent::from_rational(&c));
        }
        if !p.is_param_only() {
            return Err(SymError::Unsupported(format!(
                "exponent `{p}` must depend on parameters only"
            )));
        }
        Ok(Exponent::Gen(p))
    }

    pub fn to_poly(&self) -> Poly {
        match self {
            Exponent::Int(k) => Poly::int(*k),
            Exponent::Gen(p) => p.clone(),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Exponent::Int(k) => Some(*k),
            Exponent::Gen(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Exponent::Int(0))
    }

    pub fn is_nonneg_int(&self) -> bool {
        matches!(self, Exponent::Int(k) if *k >= 0)
    }

    pub fn is_even_int(&self) -> bool {
        matches!(self, Exponent::Int(k) if k % 2 == 0)
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        match (self, other) {
            (Exponent::Int(a), Exponent::Int(b)) => match a.checked_add(*b) {
                Some(s) => Exponent::Int(s),
                None => Exponent::Gen(Poly::int(*a) + Poly::int(*b)),
            },
            _ => Exponent::from_poly(self.to_poly() + other.to_poly())
                .expect("sum of parameter polynomials"),
        }
    }

    pub fn mul(&self, other: &Exponent) -> Exponent {
        match (self, other) {
            (Exponent::Int(a), Exponent::Int(b)) => match a.checked_mul(*b) {
                Some(s) => Exponent::Int(s),
                None => Exponent::Gen(Poly::int(*a) * Poly::int(*b)),
            },
            _ => Exponent::from_poly(&self.to_poly() * &other.to_poly())
                .expect("product of parameter polynomials"),
        }
    }

    pub fn neg(&self) -> Exponent {
        self.mul(&Exponent::Int(-1))
    }
}

// ---------------------------------------------------------------------------
// Monomial

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn factors(&self) -> &[(Atom, Exponent)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent_of(&self, atom: &Atom) -> Option<&Exponent> {
        self.0
            .binary_search_by(|(a, _)| a.cmp(atom))
            .ok()
            .map(|i| &self.0[i].1)
    }

    /// Removes `atom` from the factor list.
    pub fn without(&self, atom: &Atom) -> Monomial {
        Monomial(self.0.iter().filter(|(a, _)| a != atom).cloned().collect())
    }

    /// Splits into the factors whose atom satisfies `pred` and the rest.
    pub fn split<F: Fn(&Atom) -> bool>(&self, pred: F) -> (Monomial, Monomial) {
        let (a, b): (Vec<_>, Vec<_>) = self.0.iter().cloned().partition(|(a, _)| pred(a));
        (Monomial(a), Monomial(b))
    }

    pub fn to_poly(&self) -> Poly {
        Poly::single(Rational::one(), self.clone())
    }

    pub fn from_factors(factors: Vec<(Atom, Exponent)>) -> Poly {
        assemble(Rational::one(), factors)
    }
}

/// Merges two sorted factor lists. The flag reports whether a canonical
/// fix-up (expansion, prime folding, exponential merging) is required.
fn merge_factors(a: &Monomial, b: &Monomial) -> (Vec<(Atom, Exponent)>, bool) {
    let mut out = Vec::with_capacity(a.0.len() + b.0.len());
    let mut fix = false;
    let (mut i, mut j) = (0, 0);
    let mut exps = 0;
    while i < a.0.len() || j < b.0.len() {
        let take = if i == a.0.len() {
            std::cmp::Ordering::Greater
        } else if j == b.0.len() {
            std::cmp::Ordering::Less
        } else {
            a.0[i].0.cmp(&b.0[j].0)
        };
        match take {
            std::cmp::Ordering::Less => {
                out.push(a.0[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b.0[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let e = a.0[i].1.add(&b.0[j].1);
                let atom = &a.0[i].0;
                match (&e, atom) {
                    (Exponent::Int(0), _) => {}
                    (Exponent::Int(k), Atom::Base(_)) if *k >= 0 => {
                        fix = true;
                        out.push((atom.clone(), e));
                    }
                    (Exponent::Int(_), Atom::Prime(_)) => {
                        fix = true;
                        out.push((atom.clone(), e));
                    }
                    (_, Atom::Exp(_)) => {
                        fix = true;
                        out.push((atom.clone(), e));
                    }
                    _ => out.push((atom.clone(), e)),
                }
                i += 1;
                j += 1;
            }
        }
    }
    for (a, _) in &out {
        if matches!(a, Atom::Exp(_)) {
            exps += 1;
        }
    }
    (out, fix || exps > 1)
}

/// Builds `coef * Π atom^exp` in canonical form.
pub(crate) fn assemble(coef: Rational, factors: Vec<(Atom, Exponent)>) -> Poly {
    if coef.is_zero() {
        return Poly::zero();
    }
    let mut coef = coef;
    let mut merged: BTreeMap<Atom, Exponent> = BTreeMap::new();
    let mut exp_arg = Poly::zero();
    for (atom, e) in factors {
        if e.is_zero() {
            continue;
        }
        match atom {
            Atom::Exp(a) => {
                exp_arg = exp_arg + &a * &e.to_poly();
            }
            other => {
                let slot = merged.entry(other).or_insert(Exponent::Int(0));
                *slot = slot.add(&e);
            }
        }
    }
    let mut out: Vec<(Atom, Exponent)> = Vec::with_capacity(merged.len() + 1);
    let mut expansions: Vec<(Poly, i64)> = Vec::new();
    for (atom, e) in merged {
        if e.is_zero() {
            continue;
        }
        match (&atom, &e) {
            (Atom::Prime(p), Exponent::Int(k)) => {
                coef *= rat_powi(&Rational::from_integer(p.clone()), *k).expect("prime power");
            }
            (Atom::Base(b), Exponent::Int(k)) if *k >= 0 => expansions.push((b.clone(), *k)),
            _ => out.push((atom, e)),
        }
    }
    if !exp_arg.is_zero() {
        out.push((Atom::Exp(exp_arg), Exponent::Int(1)));
        out.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let mut result = Poly::single(coef, Monomial(out));
    for (b, k) in expansions {
        result = &result * &b.pow_nonneg(k as u64);
    }
    result
}

// ---------------------------------------------------------------------------
// Poly: construction and inspection

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn one() -> Self {
        Poly::constant(Rational::one())
    }

    pub fn int(n: i64) -> Self {
        Poly::constant(rat(n))
    }

    pub fn constant(c: Rational) -> Self {
        Poly::single(c, Monomial::one())
    }

    fn single(c: Rational, m: Monomial) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Poly { terms }
    }

    pub fn from_atom(a: Atom) -> Self {
        match a {
            Atom::Base(b) => b,
            Atom::Prime(p) => Poly::constant(Rational::from_integer(p)),
            Atom::Exp(arg) => arg.exp(),
            other => Poly::single(Rational::one(), Monomial(vec![(other, Exponent::Int(1))])),
        }
    }

    pub fn symbol(s: Symbol) -> Self {
        Poly::from_atom(Atom::Sym(s))
    }

    pub fn var(name: &str) -> Self {
        Poly::symbol(Symbol::var(name))
    }

    pub fn param(name: &str) -> Self {
        Poly::symbol(Symbol::param(name))
    }

    pub fn jet(t: u32, x: u32) -> Self {
        Poly::symbol(Symbol::jet(t, x))
    }

    /// Opaque application, validated: `f` takes one argument, derivative order
    /// at most [`MAX_F_ORDER`], and may not be nested inside itself.
    pub fn apply(func: &str, derivs: Vec<u32>, args: Vec<Poly>) -> Result<Self> {
        if derivs.len() != args.len() {
            return Err(SymError::Unsupported(format!(
                "`{func}` applied to {} arguments with {} derivative orders",
                args.len(),
                derivs.len()
            )));
        }
        if func == NONLINEARITY {
            if args.len() != 1 {
                return Err(SymError::Unsupported("f takes exactly one argument".into()));
            }
            if derivs[0] > MAX_F_ORDER {
                return Err(SymError::DerivativeOrder {
                    func: func.into(),
                    order: derivs[0],
                    max: MAX_F_ORDER,
                });
            }
            if args[0].contains_function(NONLINEARITY) {
                return Err(SymError::Unsupported("nested application of f".into()));
            }
        }
        Ok(Poly::from_atom(Atom::Apply {
            func: Arc::from(func),
            derivs,
            args,
        }))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn as_single_term(&self) -> Option<(&Monomial, &Rational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    /// The atom if this is exactly `1 * atom^1`.
    pub fn as_atom(&self) -> Option<&Atom> {
        let (m, c) = self.as_single_term()?;
        if !c.is_one() || m.0.len() != 1 || m.0[0].1 != Exponent::Int(1) {
            return None;
        }
        Some(&m.0[0].0)
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self.as_atom()? {
            Atom::Sym(s) => Some(s),
            _ => None,
        }
    }

    /// True when every atom is a parameter with an integer exponent.
    pub fn is_param_only(&self) -> bool {
        self.terms.keys().all(|m| {
            m.0.iter()
                .all(|(a, e)| matches!(a, Atom::Sym(Symbol::Param(_))) && e.as_int().is_some())
        })
    }

    fn lead_coefficient(&self) -> Option<&Rational> {
        self.terms.values().next()
    }

    /// Top-level atoms.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(a, _)| a.clone()))
            .collect()
    }

    /// Every symbol occurring anywhere, including arguments and exponents.
    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        for m in self.terms.keys() {
            for (a, e) in &m.0 {
                a.collect_symbols(out);
                if let Exponent::Gen(p) = e {
                    p.collect_symbols(out);
                }
            }
        }
    }

    /// Every opaque application occurring anywhere.
    pub fn applications(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_applications(&mut out);
        out
    }

    fn collect_applications(&self, out: &mut BTreeSet<Atom>) {
        for m in self.terms.keys() {
            for (a, _) in &m.0 {
                match a {
                    Atom::Apply { args, .. } => {
                        out.insert(a.clone());
                        for p in args {
                            p.collect_applications(out);
                        }
                    }
                    Atom::Ln { arg, .. } | Atom::Base(arg) | Atom::Exp(arg) => {
                        arg.collect_applications(out)
                    }
                    _ => {}
                }
            }
        }
    }

    pub fn contains_function(&self, func: &str) -> bool {
        self.applications()
            .iter()
            .any(|a| matches!(a, Atom::Apply { func: f, .. } if &**f == func))
    }

    pub fn contains_symbol(&self, s: &Symbol) -> bool {
        self.free_symbols().contains(s)
    }

    /// Terms containing `atom^k` exactly, with that factor removed. `k = 0`
    /// selects the terms free of `atom` at top level.
    pub fn coefficient(&self, atom: &Atom, k: i64) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exponent_of(atom).cloned().unwrap_or(Exponent::Int(0));
            if e == Exponent::Int(k) {
                out.add_term(m.without(atom), c.clone());
            }
        }
        out
    }

    /// Groups terms by their factors over `selected` atoms.
    pub fn collect<F: Fn(&Atom) -> bool>(&self, selected: F) -> BTreeMap<Monomial, Poly> {
        let mut out: BTreeMap<Monomial, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (key, rest) = m.split(&selected);
            out.entry(key).or_default().add_term(rest, c.clone());
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    /// Divides by the coefficient of the first term so that it becomes one.
    pub fn monic(&self) -> Poly {
        match self.lead_coefficient() {
            Some(c) => self.scale(&c.recip()),
            None => Poly::zero(),
        }
    }
}

// ---------------------------------------------------------------------------
// Arithmetic

impl<'a> Add<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let (big, small) = if self.len() >= rhs.len() {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let mut out = big.clone();
        for (m, c) in &small.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Add<Poly> for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (m, c) in rhs.terms {
            self.add_term(m, c);
        }
        self
    }
}

impl Add<&Poly> for Poly {
    type Output = Poly;
    fn add(mut self, rhs: &Poly) -> Poly {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), c.clone());
        }
        self
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        -&self
    }
}

impl<'a> Sub<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Sub<Poly> for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Sub<&Poly> for Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        &self - rhs
    }
}

impl<'a> Mul<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                let c = ca * cb;
                if mb.is_one() {
                    out.add_term(ma.clone(), c);
                    continue;
                }
                if ma.is_one() {
                    out.add_term(mb.clone(), c);
                    continue;
                }
                let (factors, fix) = merge_factors(ma, mb);
                if fix {
                    out = out + assemble(c, factors);
                } else {
                    out.add_term(Monomial(factors), c);
                }
            }
        }
        out
    }
}

impl Mul<Poly> for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

impl Mul<&Poly> for Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        &self * rhs
    }
}

impl std::iter::Sum for Poly {
    fn sum<I: Iterator<Item = Poly>>(iter: I) -> Poly {
        iter.fold(Poly::zero(), |a, b| a + b)
    }
}

pub(crate) fn rat_powi(r: &Rational, k: i64) -> Result<Rational> {
    if k < 0 {
        if r.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(num_traits::pow(r.recip(), (-k) as usize))
    } else {
        Ok(num_traits::pow(r.clone(), k as usize))
    }
}

/// Prime factorisation by trial division; a large cofactor without small
/// divisors is kept as a single factor.
fn factorize(n: &BigInt) -> Vec<(BigInt, i64)> {
    let mut out = Vec::new();
    let mut n = n.abs();
    let mut p = BigInt::from(2);
    let limit = BigInt::from(1_000_000u64);
    while &p * &p <= n && p <= limit {
        let mut k = 0;
        while (&n % &p).is_zero() {
            n /= &p;
            k += 1;
        }
        if k > 0 {
            out.push((p.clone(), k));
        }
        p += 1;
    }
    if n > BigInt::one() {
        out.push((n, 1));
    }
    out
}

fn rational_prime_factors(r: &Rational) -> Vec<(BigInt, i64)> {
    let mut out = factorize(r.numer());
    out.extend(factorize(r.denom()).into_iter().map(|(p, k)| (p, -k)));
    out
}

impl Poly {
    fn pow_nonneg(&self, k: u64) -> Poly {
        let mut result = Poly::one();
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        result
    }

    pub fn powi(&self, k: i64) -> Result<Poly> {
        self.pow(&Exponent::Int(k))
    }

    pub fn recip(&self) -> Result<Poly> {
        self.powi(-1)
    }

    pub fn checked_div(&self, other: &Poly) -> Result<Poly> {
        Ok(self * &other.recip()?)
    }

    pub fn pow(&self, e: &Exponent) -> Result<Poly> {
        if e.is_zero() {
            return Ok(Poly::one());
        }
        if self.is_zero() {
            return match e {
                Exponent::Int(k) if *k > 0 => Ok(Poly::zero()),
                _ => Err(SymError::DivisionByZero),
            };
        }
        if let Some((m, c)) = self.as_single_term() {
            let mut factors = Vec::with_capacity(m.0.len() + 2);
            let coef = match e {
                Exponent::Int(k) => rat_powi(c, *k)?,
                Exponent::Gen(_) => {
                    if c.is_negative() {
                        return Err(SymError::Domain(format!(
                            "negative constant {c} raised to non-integer power {}",
                            Poly::from(e.clone())
                        )));
                    }
                    for (p, k) in rational_prime_factors(c) {
                        factors.push((Atom::Prime(p), e.mul(&Exponent::Int(k))));
                    }
                    Rational::one()
                }
            };
            for (a, f) in &m.0 {
                factors.push((a.clone(), f.mul(e)));
            }
            return Ok(assemble(coef, factors));
        }
        if let Exponent::Int(k) = e {
            if *k > 0 {
                return Ok(self.pow_nonneg(*k as u64));
            }
        }
        let lead = self.lead_coefficient().cloned().unwrap();
        let (scale, base) = match e {
            Exponent::Int(_) => (Some(lead.clone()), self.scale(&lead.recip())),
            Exponent::Gen(_) if lead.is_positive() => {
                (Some(lead.clone()), self.scale(&lead.recip()))
            }
            Exponent::Gen(_) => (None, self.clone()),
        };
        let core = assemble(Rational::one(), vec![(Atom::Base(base), e.clone())]);
        match scale {
            Some(s) if !s.is_one() => Ok(&Poly::constant(s).pow(e)? * &core),
            _ => Ok(core),
        }
    }

    /// `exp(self)`, pulling out `ln` terms with parameter-only coefficients.
    pub fn exp(&self) -> Poly {
        let mut rest = Poly::zero();
        let mut product = Poly::one();
        for (m, c) in &self.terms {
            if let Some((Atom::Ln { arg, abs }, coeff)) = split_ln_term(m, c) {
                if let Ok(e) = Exponent::from_poly(coeff) {
                    if !abs || e.is_even_int() {
                        if let Ok(p) = arg.pow(&e) {
                            product = &product * &p;
                            continue;
                        }
                    }
                }
            }
            rest.add_term(m.clone(), c.clone());
        }
        if rest.is_zero() {
            product
        } else {
            &product * &assemble(Rational::one(), vec![(Atom::Exp(rest), Exponent::Int(1))])
        }
    }

    pub fn ln(&self) -> Result<Poly> {
        self.ln_impl(false)
    }

    /// `ln|self|`.
    pub fn ln_abs(&self) -> Result<Poly> {
        self.ln_impl(true)
    }

    fn ln_impl(&self, abs: bool) -> Result<Poly> {
        if self.is_zero() {
            return Err(SymError::LogDomain("ln(0)".into()));
        }
        if let Some((m, c)) = self.as_single_term() {
            if c.is_negative() && !abs {
                return Err(SymError::LogDomain(format!("ln({self})")));
            }
            let mut res = ln_rational(&c.abs());
            for (a, e) in &m.0 {
                let ep = e.to_poly();
                let term = match a {
                    Atom::Exp(arg) => arg.clone(),
                    Atom::Prime(p) => {
                        ln_atom(Poly::constant(Rational::from_integer(p.clone())), false)
                    }
                    Atom::Base(b) => ln_atom(b.clone(), abs || e.is_even_int()),
                    other => ln_atom(Poly::from_atom(other.clone()), abs || e.is_even_int()),
                };
                res = res + &ep * &term;
            }
            return Ok(res);
        }
        let lead = self.lead_coefficient().cloned().unwrap();
        if abs || lead.is_positive() {
            let base = self.scale(&lead.recip());
            Ok(ln_rational(&lead.abs()) + ln_atom(base, abs))
        } else {
            Ok(ln_atom(self.clone(), false))
        }
    }
}

fn ln_atom(arg: Poly, abs: bool) -> Poly {
    Poly::single(
        Rational::one(),
        Monomial(vec![(Atom::Ln { arg, abs }, Exponent::Int(1))]),
    )
}

fn ln_rational(c: &Rational) -> Poly {
    let mut res = Poly::zero();
    for (p, k) in rational_prime_factors(c) {
        res = res + ln_atom(Poly::constant(Rational::from_integer(p)), false).scale(&rat(k));
    }
    res
}

/// Recognises `c * params * ln(B)` and returns the `ln` atom with the
/// parameter-only coefficient.
fn split_ln_term(m: &Monomial, c: &Rational) -> Option<(Atom, Poly)> {
    let mut ln = None;
    let mut coeff = Poly::constant(c.clone());
    for (a, e) in &m.0 {
        match a {
            Atom::Ln { .. } if *e == Exponent::Int(1) && ln.is_none() => ln = Some(a.clone()),
            Atom::Sym(Symbol::Param(_)) if e.as_int().is_some() => {
                coeff = &coeff * &assemble(Rational::one(), vec![(a.clone(), e.clone())]);
            }
            _ => return None,
        }
    }
    ln.map(|l| (l, coeff))
}

// ---------------------------------------------------------------------------
// Atoms

impl Atom {
    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        match self {
            Atom::Prime(_) => {}
            Atom::Sym(s) => {
                out.insert(s.clone());
            }
            Atom::Apply { args, .. } => args.iter().for_each(|a| a.collect_symbols(out)),
            Atom::Ln { arg, .. } | Atom::Base(arg) | Atom::Exp(arg) => arg.collect_symbols(out),
        }
    }

    /// The value of the atom as a polynomial (for `Base` this is the sum itself).
    pub fn value(&self) -> Poly {
        match self {
            Atom::Base(b) => b.clone(),
            other => Poly::single(
                Rational::one(),
                Monomial(vec![(other.clone(), Exponent::Int(1))]),
            ),
        }
    }

    pub fn is_application_of(&self, name: &str) -> bool {
        matches!(self, Atom::Apply { func, .. } if &**func == name)
    }
}

impl From<Exponent> for Poly {
    fn from(e: Exponent) -> Poly {
        e.to_poly()
    }
}

// ---------------------------------------------------------------------------
// Calculus and substitution

impl Poly {
    /// Partial derivative with respect to `s`; every other symbol, jets
    /// included, is held fixed.
    pub fn diff(&self, s: &Symbol) -> Result<Poly> {
        let mut out = Poly::zero();
        let mut cache: BTreeMap<&Atom, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            for (i, (a, e)) in m.0.iter().enumerate() {
                let da = match cache.get(a) {
                    Some(d) => d.clone(),
                    None => {
                        let d = atom_derivative(a, s)?;
                        cache.insert(a, d.clone());
                        d
                    }
                };
                let de = match e {
                    Exponent::Gen(p) => p.diff(s)?,
                    Exponent::Int(_) => Poly::zero(),
                };
                if da.is_zero() && de.is_zero() {
                    continue;
                }
                let others: Vec<(Atom, Exponent)> =
                    m.0.iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, f)| f.clone())
                        .collect();
                if !da.is_zero() {
                    let term = if matches!(a, Atom::Exp(_)) {
                        assemble(c.clone(), others.clone())
                    } else {
                        let mut fs = others.clone();
                        fs.push((a.clone(), e.add(&Exponent::Int(-1))));
                        &assemble(c.clone(), fs) * &e.to_poly()
                    };
                    out = out + &term * &da;
                }
                if !de.is_zero() {
                    let whole = assemble(c.clone(), m.0.clone());
                    out = out + &(&whole * &de) * &a.value().ln()?;
                }
            }
        }
        Ok(out)
    }

    /// Applies `f` to every atom (outermost first). Returning `Some(p)`
    /// replaces the atom's value by `p`; `None` recurses into its children.
    pub fn map_atoms<F>(&self, f: &mut F) -> Result<Poly>
    where
        F: FnMut(&Atom) -> Result<Option<Poly>>,
    {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(c.clone());
            for (a, e) in &m.0 {
                let value = match f(a)? {
                    Some(p) => p,
                    None => a.map_children(f)?,
                };
                let e = match e {
                    Exponent::Int(k) => Exponent::Int(*k),
                    Exponent::Gen(p) => Exponent::from_poly(p.map_atoms(f)?)?,
                };
                acc = &acc * &value.pow(&e)?;
                if acc.is_zero() {
                    break;
                }
            }
            out = out + acc;
        }
        Ok(out)
    }

    /// Replaces every occurrence of `target` (anywhere in the tree) by `value`.
    pub fn subs_atom(&self, target: &Atom, value: &Poly) -> Result<Poly> {
        self.map_atoms(&mut |a| Ok((a == target).then(|| value.clone())))
    }

    pub fn subs(&self, s: &Symbol, value: &Poly) -> Result<Poly> {
        self.subs_atom(&Atom::Sym(s.clone()), value)
    }

    /// Simultaneous substitution.
    pub fn subs_many(&self, map: &BTreeMap<Atom, Poly>) -> Result<Poly> {
        if map.is_empty() {
            return Ok(self.clone());
        }
        self.map_atoms(&mut |a| Ok(map.get(a).cloned()))
    }

    /// Replaces the unary opaque function `func` by `body`, a polynomial in
    /// `var`: `func^(n)(A)` becomes `(d/dvar)^n body` evaluated at `A`.
    pub fn instantiate(&self, func: &str, var: &Symbol, body: &Poly) -> Result<Poly> {
        self.instantiate_multi(func, std::slice::from_ref(var), body)
    }

    /// Multi-argument form of [`Poly::instantiate`]: `func` with partial
    /// orders `(n_1, .., n_k)` at `(A_1, .., A_k)` becomes the corresponding
    /// partial derivative of `body` in `vars`, evaluated at the arguments.
    pub fn instantiate_multi(&self, func: &str, vars: &[Symbol], body: &Poly) -> Result<Poly> {
        let mut cache: BTreeMap<Vec<u32>, Poly> = BTreeMap::new();
        self.map_atoms(&mut |a| match a {
            Atom::Apply {
                func: name,
                derivs,
                args,
            } if &**name == func && args.len() == vars.len() => {
                let d = match cache.get(derivs) {
                    Some(d) => d.clone(),
                    None => {
                        let mut d = body.clone();
                        for (v, n) in vars.iter().zip(derivs) {
                            for _ in 0..*n {
                                d = d.diff(v)?;
                            }
                        }
                        cache.insert(derivs.clone(), d.clone());
                        d
                    }
                };
                let mut map = BTreeMap::new();
                for (v, arg) in vars.iter().zip(args) {
                    let arg = arg.instantiate_multi(func, vars, body)?;
                    if arg.as_symbol() != Some(v) {
                        map.insert(Atom::Sym(v.clone()), arg);
                    }
                }
                Ok(Some(d.subs_many(&map)?))
            }
            _ => Ok(None),
        })
    }

    /// Zero test that also clears negative integer powers of sums, which
    /// structural comparison alone cannot cancel against expanded numerators.
    pub fn is_zero_cleared(&self) -> bool {
        if self.is_zero() {
            return true;
        }
        let mut worst: BTreeMap<Atom, i64> = BTreeMap::new();
        for m in self.terms.keys() {
            for (a, e) in &m.0 {
                if let (Atom::Base(_), Exponent::Int(k)) = (a, e) {
                    if *k < 0 {
                        let w = worst.entry(a.clone()).or_insert(0);
                        *w = (*w).min(*k);
                    }
                }
            }
        }
        if worst.is_empty() {
            return false;
        }
        let mut p = self.clone();
        for (a, k) in worst {
            p = p.mul_factor(&a, &Exponent::Int(-k));
        }
        p.is_zero()
    }

    /// Multiplies every monomial by `atom^e` before canonicalisation, so that
    /// existing powers of the same atom combine instead of being expanded.
    pub fn mul_factor(&self, atom: &Atom, e: &Exponent) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut fs = m.0.clone();
            fs.push((atom.clone(), e.clone()));
            out = out + assemble(c.clone(), fs);
        }
        out
    }
}

impl Atom {
    fn map_children<F>(&self, f: &mut F) -> Result<Poly>
    where
        F: FnMut(&Atom) -> Result<Option<Poly>>,
    {
        match self {
            Atom::Prime(_) | Atom::Sym(_) => Ok(self.value()),
            Atom::Apply { func, derivs, args } => {
                let args = args
                    .iter()
                    .map(|p| p.map_atoms(f))
                    .collect::<Result<Vec<_>>>()?;
                Poly::apply(func, derivs.clone(), args)
            }
            Atom::Ln { arg, abs } => arg.map_atoms(f)?.ln_impl(*abs),
            Atom::Base(b) => b.map_atoms(f),
            Atom::Exp(a) => Ok(a.map_atoms(f)?.exp()),
        }
    }
}

fn atom_derivative(a: &Atom, s: &Symbol) -> Result<Poly> {
    match a {
        Atom::Prime(_) => Ok(Poly::zero()),
        Atom::Sym(x) => Ok(if x == s { Poly::one() } else { Poly::zero() }),
        Atom::Apply { func, derivs, args } => {
            let mut out = Poly::zero();
            for (k, arg) in args.iter().enumerate() {
                let da = arg.diff(s)?;
                if da.is_zero() {
                    continue;
                }
                let mut d = derivs.clone();
                d[k] += 1;
                out = out + &Poly::apply(func, d, args.clone())? * &da;
            }
            Ok(out)
        }
        Atom::Ln { arg, .. } => {
            let da = arg.diff(s)?;
            if da.is_zero() {
                Ok(da)
            } else {
                Ok(&da * &arg.recip()?)
            }
        }
        Atom::Base(b) => b.diff(s),
        Atom::Exp(arg) => {
            let da = arg.diff(s)?;
            if da.is_zero() {
                Ok(da)
            } else {
                Ok(&a.value() * &da)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Numeric evaluation

/// Bindings for numeric evaluation. Opaque applications are looked up as
/// whole atoms.
#[derive(Clone, Debug, Default)]
pub struct Env {
    pub symbols: BTreeMap<Symbol, f64>,
    pub atoms: BTreeMap<Atom, f64>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn with(mut self, s: Symbol, v: f64) -> Self {
        self.symbols.insert(s, v);
        self
    }

    pub fn set(&mut self, s: Symbol, v: f64) {
        self.symbols.insert(s, v);
    }
}

impl Poly {
    pub fn eval(&self, env: &Env) -> Result<f64> {
        Ok(self.eval_terms(env)?.0)
    }

    /// Returns `(sum, sum of absolute term values)`; the second is the scale
    /// used for relative residuals.
    pub fn eval_terms(&self, env: &Env) -> Result<(f64, f64)> {
        let mut sum = 0.0;
        let mut mag = 0.0;
        for (m, c) in &self.terms {
            let mut v = c.to_f64().unwrap_or(f64::NAN);
            for (a, e) in &m.0 {
                let base = a.eval(env)?;
                v *= eval_power(base, e, env)?;
            }
            sum += v;
            mag += v.abs();
        }
        Ok((sum, mag))
    }
}

pub(crate) fn eval_power(base: f64, e: &Exponent, env: &Env) -> Result<f64> {
    match e {
        Exponent::Int(k) => {
            if base == 0.0 && *k < 0 {
                return Err(SymError::DivisionByZero);
            }
            Ok(base.powi(*k as i32))
        }
        Exponent::Gen(p) => {
            let ev = p.eval(env)?;
            real_pow(base, ev)
        }
    }
}

pub(crate) fn real_pow(base: f64, e: f64) -> Result<f64> {
    if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
        if base == 0.0 && e < 0.0 {
            return Err(SymError::DivisionByZero);
        }
        return Ok(base.powi(e as i32));
    }
    if base < 0.0 {
        return Err(SymError::Domain(format!(
            "{base} raised to non-integer power {e}"
        )));
    }
    if base == 0.0 && e < 0.0 {
        return Err(SymError::DivisionByZero);
    }
    Ok(base.powf(e))
}

impl Atom {
    pub fn eval(&self, env: &Env) -> Result<f64> {
        match self {
            Atom::Prime(p) => Ok(p.to_f64().unwrap_or(f64::NAN)),
            Atom::Sym(s) => env
                .symbols
                .get(s)
                .copied()
                .ok_or_else(|| SymError::Unbound(s.to_string())),
            Atom::Apply { .. } => env
                .atoms
                .get(self)
                .copied()
                .ok_or_else(|| SymError::Unbound(self.value().to_string())),
            Atom::Ln { arg, abs } => {
                let mut v = arg.eval(env)?;
                if *abs {
                    v = v.abs();
                }
                if v <= 0.0 {
                    return Err(SymError::LogDomain(format!("ln({v})")));
                }
                Ok(v.ln())
            }
            Atom::Base(b) => b.eval(env),
            Atom::Exp(a) => Ok(a.eval(env)?.exp()),
        }
    }
}

/// Integer gcd of all coefficient numerators over lcm of denominators; the
/// primitive part has coprime integer coefficients and a positive first term.
pub fn primitive_part(p: &Poly) -> Poly {
    if p.is_zero() {
        return Poly::zero();
    }
    let mut g = BigInt::zero();
    let mut l = BigInt::one();
    for c in p.terms.values() {
        g = g.gcd(c.numer());
        l = l.lcm(c.denom());
    }
    let mut scale = Rational::new(l, g);
    if p.lead_coefficient().unwrap().is_negative() {
        scale = -scale;
    }
    p.scale(&scale)
}
