//! Canonical polynomial form and expression simplification.
//!
//! A polynomial maps monomials (variable -> exponent, exponents >= 1) to
//! exact rational coefficients; zero coefficients are never stored. Printing
//! orders monomials graded-lexicographically.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

use super::expr::{rational_pow, Expr};
use super::MathError;

/// Monomial: sorted (variable, exponent) pairs, all exponents >= 1.
/// The empty monomial is the constant term.
pub type Monomial = Vec<(String, u32)>;

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: BigRational) -> Self {
        let mut p = Self::zero();
        if !value.is_zero() {
            p.terms.insert(Vec::new(), value);
        }
        p
    }

    pub fn variable(name: impl Into<String>) -> Self {
        let mut p = Self::zero();
        p.terms.insert(vec![(name.into(), 1)], BigRational::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The constant value, when the polynomial has no variables.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (mono, coeff) = self.terms.iter().next().expect("one term");
                mono.is_empty().then(|| coeff.clone())
            }
            _ => None,
        }
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    fn insert(&mut self, mono: Monomial, coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        let entry = self
            .terms
            .entry(mono.clone())
            .or_insert_with(BigRational::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&mono);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (mono, coeff) in &other.terms {
            out.insert(mono.clone(), coeff.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero();
        for (mono, coeff) in &self.terms {
            out.terms.insert(mono.clone(), -coeff.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.insert(merge_monomials(ma, mb), ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, factor: &BigRational) -> Self {
        let mut out = Self::zero();
        if factor.is_zero() {
            return out;
        }
        for (mono, coeff) in &self.terms {
            out.terms.insert(mono.clone(), coeff * factor);
        }
        out
    }

    pub fn pow(&self, exponent: u32) -> Self {
        let mut out = Polynomial::constant(BigRational::one());
        for _ in 0..exponent {
            out = out.mul(self);
        }
        out
    }

    /// Exact evaluation by substitution.
    pub fn eval(&self, point: &BTreeMap<String, BigRational>) -> Result<BigRational, MathError> {
        let mut total = BigRational::zero();
        for (mono, coeff) in &self.terms {
            let mut term = coeff.clone();
            for (var, exp) in mono {
                let value = point
                    .get(var)
                    .ok_or_else(|| MathError::parse(0, format!("unbound variable {var}")))?;
                term *= rational_pow(value, *exp);
            }
            total += term;
        }
        Ok(total)
    }

    /// Monomials in graded-lexicographic order: total degree descending,
    /// ties broken by giving alphabetically earlier variables higher
    /// exponents first (x^2 before x*y before y^2). This is the print order.
    pub fn ordered_terms(&self) -> Vec<(&Monomial, &BigRational)> {
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|(ma, _), (mb, _)| {
            let da: u64 = ma.iter().map(|(_, e)| u64::from(*e)).sum();
            let db: u64 = mb.iter().map(|(_, e)| u64::from(*e)).sum();
            db.cmp(&da).then_with(|| cmp_exponent_vectors(ma, mb))
        });
        terms
    }
}

/// Lexicographic comparison of exponent vectors over the variable union:
/// the monomial with the higher exponent on the earliest differing variable
/// sorts first. A variable absent from a monomial has exponent 0.
fn cmp_exponent_vectors(a: &Monomial, b: &Monomial) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    loop {
        match (ia.peek(), ib.peek()) {
            (None, None) => return Ordering::Equal,
            // the side that still has variables has a nonzero exponent on an
            // earlier variable slot than the exhausted side
            (Some(_), None) => return Ordering::Less,
            (None, Some(_)) => return Ordering::Greater,
            (Some((va, ea)), Some((vb, eb))) => match va.cmp(vb) {
                Ordering::Less => return Ordering::Less,
                Ordering::Greater => return Ordering::Greater,
                Ordering::Equal => {
                    if ea != eb {
                        return eb.cmp(ea);
                    }
                    ia.next();
                    ib.next();
                }
            },
        }
    }
}

fn merge_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut merged: BTreeMap<&str, u32> = BTreeMap::new();
    for (var, exp) in a.iter().chain(b) {
        *merged.entry(var.as_str()).or_insert(0) += *exp;
    }
    merged
        .into_iter()
        .map(|(v, e)| (v.to_string(), e))
        .collect()
}

fn format_coefficient(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (i, (mono, coeff)) in self.ordered_terms().into_iter().enumerate() {
            let negative = coeff.is_negative();
            let magnitude = coeff.abs();
            if i == 0 {
                if negative {
                    f.write_str("-")?;
                }
            } else if negative {
                f.write_str(" - ")?;
            } else {
                f.write_str(" + ")?;
            }
            let vars: Vec<String> = mono
                .iter()
                .map(|(v, e)| {
                    if *e == 1 {
                        v.clone()
                    } else {
                        format!("{v}^{e}")
                    }
                })
                .collect();
            if vars.is_empty() {
                f.write_str(&format_coefficient(&magnitude))?;
            } else if magnitude.is_one() {
                f.write_str(&vars.join("*"))?;
            } else {
                write!(f, "{}*{}", format_coefficient(&magnitude), vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Fully expand an expression into canonical polynomial form.
///
/// Division is only defined by subexpressions that fold to a nonzero
/// constant; division by zero or by a variable-containing expression is an
/// error.
pub fn simplify(expr: &Expr) -> Result<Polynomial, MathError> {
    match expr {
        Expr::Rational(r) => Ok(Polynomial::constant(r.clone())),
        Expr::Variable(name) => Ok(Polynomial::variable(name.clone())),
        Expr::Add(a, b) => Ok(simplify(a)?.add(&simplify(b)?)),
        Expr::Sub(a, b) => Ok(simplify(a)?.sub(&simplify(b)?)),
        Expr::Mul(a, b) => Ok(simplify(a)?.mul(&simplify(b)?)),
        Expr::Neg(a) => Ok(simplify(a)?.neg()),
        Expr::Pow(base, exponent) => Ok(simplify(base)?.pow(*exponent)),
        Expr::Div(a, b) => {
            let divisor = simplify(b)?;
            match divisor.as_constant() {
                None => Err(MathError::NonPolynomialDivision),
                Some(c) if c.is_zero() => Err(MathError::DivisionByZero),
                Some(c) => Ok(simplify(a)?.scale(&c.recip())),
            }
        }
    }
}

#[allow(dead_code)]
pub(crate) fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}
