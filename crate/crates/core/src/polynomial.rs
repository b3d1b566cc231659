//! Sparse multivariate polynomials with arbitrary-precision integer coefficients.
//!
//! Indeterminates are interned [`Symbol`]s. Terms live in a `BTreeMap` keyed by
//! [`Monomial`], so equal polynomials always have identical term maps and
//! `==` is exact polynomial equality.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("no value assigned to symbol `{0}`")]
    MissingSymbol(String),
    #[error("cannot parse polynomial at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

fn interner() -> &'static RwLock<HashSet<Arc<str>>> {
    static TABLE: OnceLock<RwLock<HashSet<Arc<str>>>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(HashSet::new()))
}

/// An interned indeterminate name. Equal names share one allocation.
#[derive(Clone)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Symbol {
        if let Some(found) = interner().read().expect("symbol table poisoned").get(name) {
            return Symbol(found.clone());
        }
        let mut table = interner().write().expect("symbol table poisoned");
        if let Some(found) = table.get(name) {
            return Symbol(found.clone());
        }
        let arc: Arc<str> = Arc::from(name);
        table.insert(arc.clone());
        Symbol(arc)
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl PartialEq for Symbol {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl Eq for Symbol {}

impl Hash for Symbol {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Orders names so that embedded digit runs compare numerically (`s2 < s10`).
/// Ties between numerically equal runs fall back to plain byte order, which
/// keeps the order total and consistent with string equality.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (ab, bb) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    while i < ab.len() && j < bb.len() {
        if ab[i].is_ascii_digit() && bb[j].is_ascii_digit() {
            let si = i;
            while i < ab.len() && ab[i].is_ascii_digit() {
                i += 1;
            }
            let sj = j;
            while j < bb.len() && bb[j].is_ascii_digit() {
                j += 1;
            }
            let ra = a[si..i].trim_start_matches('0');
            let rb = b[sj..j].trim_start_matches('0');
            let ord = ra.len().cmp(&rb.len()).then_with(|| ra.cmp(rb));
            if ord != Ordering::Equal {
                return ord;
            }
        } else {
            if ab[i] != bb[j] {
                return ab[i].cmp(&bb[j]);
            }
            i += 1;
            j += 1;
        }
    }
    (ab.len() - i).cmp(&(bb.len() - j)).then_with(|| a.cmp(b))
}

/// A power product of symbols with positive exponents, sorted by symbol.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(Symbol, u32)>);

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(Vec::new())
    }

    pub fn var(s: Symbol) -> Monomial {
        Monomial(vec![(s, 1)])
    }

    /// Builds a monomial from arbitrary factors; repeated symbols accumulate.
    pub fn from_factors<I: IntoIterator<Item = (Symbol, u32)>>(factors: I) -> Monomial {
        let mut acc: BTreeMap<Symbol, u32> = BTreeMap::new();
        for (s, e) in factors {
            if e > 0 {
                *acc.entry(s).or_insert(0) += e;
            }
        }
        Monomial(acc.into_iter().collect())
    }

    pub fn product<'a, I: IntoIterator<Item = &'a Symbol>>(symbols: I) -> Monomial {
        Monomial::from_factors(symbols.into_iter().map(|s| (s.clone(), 1)))
    }

    pub fn factors(&self) -> &[(Symbol, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    pub fn pow(&self, e: u32) -> Monomial {
        Monomial(self.0.iter().map(|(s, k)| (s.clone(), k * e)).collect())
    }

    fn flat(&self) -> impl Iterator<Item = &Symbol> {
        self.0.iter().flat_map(|(s, e)| std::iter::repeat_n(s, *e as usize))
    }

    pub fn evaluate(&self, at: &HashMap<Symbol, BigRational>) -> Result<BigRational, PolyError> {
        let mut acc = BigRational::one();
        for (s, e) in &self.0 {
            let v = at.get(s).ok_or_else(|| PolyError::MissingSymbol(s.to_string()))?;
            acc *= num_traits::pow(v.clone(), *e as usize);
        }
        Ok(acc)
    }
}

impl Ord for Monomial {
    /// Graded order: total degree first, then lexicographic on the sorted
    /// sequence of symbols with repetition (so `x^2` precedes `x*y`).
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.flat().cmp(other.flat()))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for (k, (s, e)) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}^{e}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Exact polynomial with nonzero `BigInt` coefficients.
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, BigInt>,
}

impl Polynomial {
    pub fn zero() -> Polynomial {
        Polynomial::default()
    }

    pub fn one() -> Polynomial {
        Polynomial::constant(BigInt::one())
    }

    pub fn constant(c: BigInt) -> Polynomial {
        Polynomial::term(c, Monomial::one())
    }

    pub fn var(s: Symbol) -> Polynomial {
        Polynomial::term(BigInt::one(), Monomial::var(s))
    }

    pub fn term(c: BigInt, m: Monomial) -> Polynomial {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Polynomial { terms }
    }

    pub fn sum_of_vars<'a, I: IntoIterator<Item = &'a Symbol>>(symbols: I) -> Polynomial {
        let mut p = Polynomial::zero();
        for s in symbols {
            p.add_term(BigInt::one(), Monomial::var(s.clone()));
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending monomial order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigInt)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigInt {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter().map(|(s, _)| s.clone()))
            .collect()
    }

    /// Two terms with coefficients `+1` and `-1`.
    pub fn as_binomial(&self) -> Option<(&Monomial, &Monomial)> {
        if self.terms.len() != 2 {
            return None;
        }
        let mut it = self.terms.iter();
        let (m1, c1) = it.next()?;
        let (m2, c2) = it.next()?;
        if c1.abs().is_one() && c2.abs().is_one() && c1.sign() != c2.sign() {
            Some((m1, m2))
        } else {
            None
        }
    }

    pub fn add_term(&mut self, c: BigInt, m: Monomial) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(c.clone(), m.clone());
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(-c.clone(), m.clone());
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(c1 * c2, m1.mul(m2));
            }
        }
        out
    }

    pub fn neg(&self) -> Polynomial {
        Polynomial {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }

    pub fn scale(&self, k: &BigInt) -> Polynomial {
        if k.is_zero() {
            return Polynomial::zero();
        }
        Polynomial {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    /// Sign-normalized copy: the coefficient of the least monomial is positive.
    pub fn normalized(&self) -> Polynomial {
        match self.terms.values().next() {
            Some(c) if c.is_negative() => self.neg(),
            _ => self.clone(),
        }
    }

    pub fn evaluate(&self, at: &HashMap<Symbol, BigRational>) -> Result<BigRational, PolyError> {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            acc += m.evaluate(at)? * BigRational::from_integer(c.clone());
        }
        Ok(acc)
    }

    /// Applies a ring map sending each symbol to a monomial. Symbols without an
    /// image are reported through the error.
    pub fn map_monomials(
        &self,
        image: &dyn Fn(&Symbol) -> Option<Monomial>,
    ) -> Result<Polynomial, PolyError> {
        let mut out = Polynomial::zero();
        for (m, c) in &self.terms {
            let mut acc = Monomial::one();
            for (s, e) in m.factors() {
                let im = image(s).ok_or_else(|| PolyError::MissingSymbol(s.to_string()))?;
                acc = acc.mul(&im.pow(*e));
            }
            out.add_term(c.clone(), acc);
        }
        Ok(out)
    }
}

impl fmt::Display for Polynomial {
    /// Terms in ascending monomial order, e.g. `p000*p101 - p001*p100`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            match (k, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if m.is_one() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{abs}*{m}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        Polynomial::add(self, rhs)
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        Polynomial::sub(self, rhs)
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        Polynomial::mul(self, rhs)
    }
}

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial::neg(self)
    }
}

impl FromStr for Polynomial {
    type Err = PolyError;

    /// Parses sums of terms such as `3*x^2*y - y + 7`. Identifiers start with
    /// a letter and continue with letters, digits or underscores.
    fn from_str(s: &str) -> Result<Polynomial, PolyError> {
        Parser { src: s.as_bytes(), pos: 0 }.polynomial()
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: &str) -> Result<T, PolyError> {
        Err(PolyError::Parse { pos: self.pos, msg: msg.to_string() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn number(&mut self) -> Option<BigInt> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn ident(&mut self) -> Option<Symbol> {
        self.skip_ws();
        let start = self.pos;
        if self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            return Some(Symbol::new(std::str::from_utf8(&self.src[start..self.pos]).ok()?));
        }
        None
    }

    fn factor(&mut self) -> Result<(BigInt, Monomial), PolyError> {
        if let Some(n) = self.number() {
            return Ok((n, Monomial::one()));
        }
        let Some(s) = self.ident() else {
            return self.err("expected a number or an identifier");
        };
        let mut e = 1u32;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let Some(n) = self.number() else {
                return self.err("expected an exponent");
            };
            e = match u32::try_from(n) {
                Ok(e) => e,
                Err(_) => return self.err("exponent out of range"),
            };
        }
        Ok((BigInt::one(), Monomial::var(s).pow(e)))
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let (mut c, mut m) = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let (c2, m2) = self.factor()?;
            c *= c2;
            m = m.mul(&m2);
        }
        Ok(Polynomial::term(c, m))
    }

    fn polynomial(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = Polynomial::zero();
        let mut sign = BigInt::one();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            sign = -sign;
        } else if self.peek() == Some(b'+') {
            self.pos += 1;
        }
        loop {
            acc = acc.add(&self.term()?.scale(&sign));
            match self.peek() {
                None => return Ok(acc),
                Some(b'+') => sign = BigInt::one(),
                Some(b'-') => sign = -BigInt::one(),
                Some(_) => return self.err("expected `+`, `-` or end of input"),
            }
            self.pos += 1;
        }
    }
}
