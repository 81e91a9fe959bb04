//! Parametric coefficients: rational-weighted sums of parameter products.
//!
//! Entries of `A` and `λ` may depend on named parameters (`a1`, `x30`, ...).
//! The reduction algorithms only ever form rational linear combinations of
//! such entries and divide by a single-term prefactor, so a sparse map from
//! parameter monomials to rational weights is closed under everything we
//! need without a general computer algebra system.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::linalg::{rat_to_f64, rat_to_short, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoeffError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("parameter `{0}` bound to zero appears with a negative power")]
    DivisionByZero(String),
    #[error("cannot divide by multi-term coefficient `{0}`")]
    NonMonomialDivisor(String),
}

/// Formal product of named parameters with integer powers. The empty atom is
/// the constant 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(BTreeMap<String, i32>);

impl Atom {
    pub fn one() -> Self {
        Atom(BTreeMap::new())
    }

    pub fn param(name: &str) -> Self {
        Atom(BTreeMap::from([(name.to_string(), 1)]))
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn powers(&self) -> impl Iterator<Item = (&str, i32)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn pow(&self, exponent: i32) -> Atom {
        if exponent == 0 {
            return Atom::one();
        }
        Atom(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v * exponent))
                .collect(),
        )
    }

    pub fn mul(&self, other: &Atom) -> Atom {
        let mut out = self.0.clone();
        for (k, v) in &other.0 {
            let e = out.entry(k.clone()).or_insert(0);
            *e += v;
            if *e == 0 {
                out.remove(k);
            }
        }
        Atom(out)
    }

    pub fn inverse(&self) -> Atom {
        self.pow(-1)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(name, &p)| match p {
                1 => name.clone(),
                p if p < 0 => format!("{name}^({p})"),
                p => format!("{name}^{p}"),
            })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Sparse rational combination of parameter atoms; zero weights are never
/// stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coefficient {
    terms: BTreeMap<Atom, Rational>,
}

impl Coefficient {
    pub fn zero() -> Self {
        Coefficient::default()
    }

    pub fn one() -> Self {
        Self::from(Rational::one())
    }

    pub fn param(name: &str) -> Self {
        Self::term(Atom::param(name), Rational::one())
    }

    pub fn term(atom: Atom, weight: Rational) -> Self {
        let mut c = Coefficient::zero();
        c.add_term(atom, weight);
        c
    }

    pub fn add_term(&mut self, atom: Atom, weight: Rational) {
        if weight.is_zero() {
            return;
        }
        let slot = self
            .terms
            .entry(atom.clone())
            .or_insert_with(Rational::zero);
        *slot += weight;
        if slot.is_zero() {
            self.terms.remove(&atom);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Atom, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Some(value)` when the coefficient has no parameter dependence.
    pub fn as_rational(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Atom::one()).cloned(),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.as_rational().is_some()
    }

    /// Weight of the constant (parameter-free) atom.
    pub fn constant_part(&self) -> Rational {
        self.terms
            .get(&Atom::one())
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.terms
            .keys()
            .flat_map(|a| a.0.keys().cloned())
            .collect()
    }

    pub fn scale(&self, factor: &Rational) -> Coefficient {
        if factor.is_zero() {
            return Coefficient::zero();
        }
        Coefficient {
            terms: self
                .terms
                .iter()
                .map(|(a, w)| (a.clone(), w * factor))
                .collect(),
        }
    }

    /// Division by a single-term coefficient.
    pub fn checked_div(&self, divisor: &Coefficient) -> Result<Coefficient, CoeffError> {
        let (atom, weight) = divisor
            .single_term()
            .ok_or_else(|| CoeffError::NonMonomialDivisor(divisor.to_string()))?;
        let inv_atom = atom.inverse();
        let inv_weight = weight.recip();
        let mut out = Coefficient::zero();
        for (a, w) in &self.terms {
            out.add_term(a.mul(&inv_atom), w * &inv_weight);
        }
        Ok(out)
    }

    pub fn single_term(&self) -> Option<(&Atom, &Rational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    /// Substitutes the bound parameters, leaving unbound ones symbolic.
    pub fn substitute(
        &self,
        values: &BTreeMap<String, Rational>,
    ) -> Result<Coefficient, CoeffError> {
        let mut out = Coefficient::zero();
        for (atom, weight) in &self.terms {
            let mut w = weight.clone();
            let mut rest = BTreeMap::new();
            for (name, &p) in &atom.0 {
                match values.get(name) {
                    Some(v) => {
                        if v.is_zero() {
                            if p < 0 {
                                return Err(CoeffError::DivisionByZero(name.clone()));
                            }
                            w = Rational::zero();
                        } else {
                            let mut factor = num_traits::pow(v.clone(), p.unsigned_abs() as usize);
                            if p < 0 {
                                factor = factor.recip();
                            }
                            w *= factor;
                        }
                    }
                    None => {
                        rest.insert(name.clone(), p);
                    }
                }
            }
            out.add_term(Atom(rest), w);
        }
        Ok(out)
    }

    /// Replaces parameters by coefficient expressions. Negative powers are
    /// only allowed when the replacement is a single term.
    pub fn substitute_exprs(
        &self,
        values: &BTreeMap<String, Coefficient>,
    ) -> Result<Coefficient, CoeffError> {
        let mut out = Coefficient::zero();
        for (atom, weight) in &self.terms {
            let mut product = Coefficient::term(Atom::one(), weight.clone());
            let mut rest = BTreeMap::new();
            for (name, &p) in &atom.0 {
                match values.get(name) {
                    Some(expr) => {
                        let base = if p < 0 {
                            Coefficient::one().checked_div(expr)?
                        } else {
                            expr.clone()
                        };
                        for _ in 0..p.unsigned_abs() {
                            product = &product * &base;
                        }
                    }
                    None => {
                        rest.insert(name.clone(), p);
                    }
                }
            }
            out += &(&product * &Coefficient::term(Atom(rest), Rational::one()));
        }
        Ok(out)
    }

    /// Full evaluation; every parameter must be bound.
    pub fn evaluate(&self, values: &BTreeMap<String, Rational>) -> Result<Rational, CoeffError> {
        let bound = self.substitute(values)?;
        bound.as_rational().ok_or_else(|| {
            CoeffError::UnboundParameter(bound.params().into_iter().next().unwrap_or_default())
        })
    }

    pub fn evaluate_f64(&self, values: &BTreeMap<String, Rational>) -> Result<f64, CoeffError> {
        self.evaluate(values).map(|v| rat_to_f64(&v))
    }
}

impl From<Rational> for Coefficient {
    fn from(value: Rational) -> Self {
        Coefficient::term(Atom::one(), value)
    }
}

impl From<i64> for Coefficient {
    fn from(value: i64) -> Self {
        Coefficient::from(crate::linalg::int(value))
    }
}

impl AddAssign<&Coefficient> for Coefficient {
    fn add_assign(&mut self, rhs: &Coefficient) {
        for (a, w) in &rhs.terms {
            self.add_term(a.clone(), w.clone());
        }
    }
}

impl Add for &Coefficient {
    type Output = Coefficient;
    fn add(self, rhs: &Coefficient) -> Coefficient {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &Coefficient {
    type Output = Coefficient;
    fn sub(self, rhs: &Coefficient) -> Coefficient {
        let mut out = self.clone();
        out += &(-rhs);
        out
    }
}

impl Neg for &Coefficient {
    type Output = Coefficient;
    fn neg(self) -> Coefficient {
        Coefficient {
            terms: self.terms.iter().map(|(a, w)| (a.clone(), -w)).collect(),
        }
    }
}

impl Mul for &Coefficient {
    type Output = Coefficient;
    fn mul(self, rhs: &Coefficient) -> Coefficient {
        let mut out = Coefficient::zero();
        for (a, w) in &self.terms {
            for (b, v) in &rhs.terms {
                out.add_term(a.mul(b), w * v);
            }
        }
        out
    }
}

impl fmt::Display for Coefficient {
    /// Human-readable sum, e.g. `a1 - a3`, `-4*a2`, `1/2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Constant atom last reads more naturally: `a4*x30 - 2`.
        let mut ordered: Vec<_> = self.terms.iter().filter(|(a, _)| !a.is_one()).collect();
        ordered.extend(self.terms.iter().filter(|(a, _)| a.is_one()));
        for (i, (atom, weight)) in ordered.into_iter().enumerate() {
            let negative = weight.is_negative();
            let magnitude = weight.abs();
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if atom.is_one() {
                write!(f, "{}", rat_to_short(&magnitude))?;
            } else if magnitude.is_one() {
                write!(f, "{atom}")?;
            } else {
                write!(f, "{}*{atom}", rat_to_short(&magnitude))?;
            }
        }
        Ok(())
    }
}
