//! Arithmetic expression parsing and exact evaluation.
//!
//! Grammar (whitespace insignificant between tokens):
//!
//! ```text
//! expr     := term (('+' | '-') term)*          left-associative
//! term     := unary (('*' | '/') unary)*        left-associative
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := integer ('^' integer)*            right-associative, folded
//! atom     := number | variable | '(' expr ')'
//! number   := [0-9]+ ('.' [0-9]+)?              decimals become exact rationals
//! variable := [a-zA-Z][a-zA-Z0-9_]*
//! ```
//!
//! Implicit multiplication (`2x`) is rejected. Exponents must be
//! non-negative integer literals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};
use std::collections::BTreeMap;
use std::fmt;

use super::MathError;

/// Expression tree. Rational literals are kept in lowest terms with a
/// positive denominator (guaranteed by the rational type itself).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Rational(BigRational),
    Variable(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn integer(n: i64) -> Self {
        Expr::Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Variable(name.into())
    }

    /// Exact recursive evaluation at a point. This is the independent route
    /// used to cross-check [`super::simplify`]; it never goes through the
    /// polynomial representation.
    pub fn eval(&self, point: &BTreeMap<String, BigRational>) -> Result<BigRational, MathError> {
        match self {
            Expr::Rational(r) => Ok(r.clone()),
            Expr::Variable(name) => point
                .get(name)
                .cloned()
                .ok_or_else(|| MathError::parse(0, format!("unbound variable {name}"))),
            Expr::Add(a, b) => Ok(a.eval(point)? + b.eval(point)?),
            Expr::Sub(a, b) => Ok(a.eval(point)? - b.eval(point)?),
            Expr::Mul(a, b) => Ok(a.eval(point)? * b.eval(point)?),
            Expr::Div(a, b) => {
                let denom = b.eval(point)?;
                if denom.is_zero() {
                    return Err(MathError::DivisionByZero);
                }
                Ok(a.eval(point)? / denom)
            }
            Expr::Neg(a) => Ok(-a.eval(point)?),
            Expr::Pow(base, exponent) => {
                let base = base.eval(point)?;
                Ok(rational_pow(&base, *exponent))
            }
        }
    }
}

pub(crate) fn rational_pow(r: &BigRational, exponent: u32) -> BigRational {
    if exponent == 0 {
        return BigRational::one();
    }
    BigRational::new(r.numer().pow(exponent), r.denom().pow(exponent))
}

/// Parse an expression, reporting the byte offset of the first error.
pub fn parse_expression(text: &str) -> Result<Expr, MathError> {
    let mut parser = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    parser.skip_ws();
    let expr = parser.parse_expr()?;
    parser.skip_ws();
    if parser.pos < parser.bytes.len() {
        return Err(MathError::parse(parser.pos, "unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, MathError> {
        let mut left = self.parse_term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    self.skip_ws();
                    let right = self.parse_term()?;
                    left = Expr::Add(Box::new(left), Box::new(right));
                }
                Some(b'-') => {
                    self.pos += 1;
                    self.skip_ws();
                    let right = self.parse_term()?;
                    left = Expr::Sub(Box::new(left), Box::new(right));
                }
                _ => return Ok(left),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, MathError> {
        let mut left = self.parse_unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    self.skip_ws();
                    let right = self.parse_unary()?;
                    left = Expr::Mul(Box::new(left), Box::new(right));
                }
                Some(b'/') => {
                    self.pos += 1;
                    self.skip_ws();
                    let right = self.parse_unary()?;
                    left = Expr::Div(Box::new(left), Box::new(right));
                }
                _ => return Ok(left),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, MathError> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, MathError> {
        let base = self.parse_atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let exponent = self.parse_exponent()?;
            return Ok(Expr::Pow(Box::new(base), exponent));
        }
        Ok(base)
    }

    /// Right-associative chain of integer exponents, folded into one value:
    /// `2^3^2` reads as `2^(3^2)`.
    fn parse_exponent(&mut self) -> Result<u32, MathError> {
        let start = self.pos;
        let first = self.parse_uint()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let rest = self.parse_exponent()?;
            return first
                .checked_pow(rest)
                .ok_or_else(|| MathError::parse(start, "exponent too large"));
        }
        Ok(first)
    }

    fn parse_uint(&mut self) -> Result<u32, MathError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(MathError::parse(
                start,
                "expected a non-negative integer exponent",
            ));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse::<u32>()
            .map_err(|_| MathError::parse(start, "exponent too large"))
    }

    fn parse_atom(&mut self) -> Result<Expr, MathError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                self.skip_ws();
                let inner = self.parse_expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(MathError::parse(open, "unclosed parenthesis"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b) if b.is_ascii_digit() => self.parse_number(),
            Some(b) if b.is_ascii_alphabetic() => Ok(self.parse_variable()),
            Some(_) => Err(MathError::parse(
                self.pos,
                "expected a number, variable or '('",
            )),
            None => Err(MathError::parse(self.pos, "unexpected end of input")),
        }
    }

    fn parse_number(&mut self) -> Result<Expr, MathError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        let mut numer: String = std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii")
            .to_string();
        let mut scale = 0usize;
        if self.peek() == Some(b'.') {
            let dot = self.pos;
            self.pos += 1;
            let frac_start = self.pos;
            while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == frac_start {
                return Err(MathError::parse(dot, "expected digits after decimal point"));
            }
            numer.push_str(std::str::from_utf8(&self.bytes[frac_start..self.pos]).expect("ascii"));
            scale = self.pos - frac_start;
        }
        let numerator: BigInt = numer.parse().expect("digit string");
        let denominator = BigInt::from(10u32).pow(scale as u32);
        Ok(Expr::Rational(BigRational::new(numerator, denominator)))
    }

    fn parse_variable(&mut self) -> Expr {
        let start = self.pos;
        self.pos += 1;
        while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'_') {
            self.pos += 1;
        }
        Expr::Variable(
            std::str::from_utf8(&self.bytes[start..self.pos])
                .expect("ascii")
                .to_string(),
        )
    }
}

// Printing with minimal parentheses; `parse(print(parse(s)))` equals
// `parse(s)` for every parseable source (parsed trees never contain
// negative rational literals, unary minus covers those).
impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Rational(_) | Expr::Variable(_) => 5,
        }
    }

    fn fmt_child(
        &self,
        f: &mut fmt::Formatter<'_>,
        parent: u8,
        needs_parens_at_equal: bool,
    ) -> fmt::Result {
        let child = self.precedence();
        if child < parent || (child == parent && needs_parens_at_equal) {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Rational(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Expr::Variable(name) => f.write_str(name),
            Expr::Add(a, b) => {
                a.fmt_child(f, 1, false)?;
                f.write_str(" + ")?;
                b.fmt_child(f, 1, true)
            }
            Expr::Sub(a, b) => {
                a.fmt_child(f, 1, false)?;
                f.write_str(" - ")?;
                b.fmt_child(f, 1, true)
            }
            Expr::Mul(a, b) => {
                a.fmt_child(f, 2, false)?;
                f.write_str("*")?;
                b.fmt_child(f, 2, true)
            }
            Expr::Div(a, b) => {
                a.fmt_child(f, 2, false)?;
                f.write_str("/")?;
                b.fmt_child(f, 2, true)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_child(f, 3, false)
            }
            Expr::Pow(base, exponent) => {
                // only plain variables and non-negative integer literals may
                // appear as a bare base; anything else re-parses differently
                let bare = matches!(base.as_ref(), Expr::Variable(_))
                    || matches!(base.as_ref(), Expr::Rational(r) if r.is_integer() && !r.numer().sign().eq(&num_bigint::Sign::Minus));
                if bare {
                    write!(f, "{base}^{exponent}")
                } else {
                    write!(f, "({base})^{exponent}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64) -> Expr {
        Expr::integer(n)
    }

    #[test]
    fn precedence_mul_over_add() {
        let got = parse_expression("2+3*4").unwrap();
        let want = Expr::Add(
            Box::new(rat(2)),
            Box::new(Expr::Mul(Box::new(rat(3)), Box::new(rat(4)))),
        );
        assert_eq!(got, want);
    }

    #[test]
    fn implicit_multiplication_rejected() {
        let err = parse_expression("2x").unwrap_err();
        assert_eq!(err, MathError::parse(1, "unexpected trailing input"));
    }

    #[test]
    fn parenthesized_division_to_power() {
        let got = parse_expression("(1/3)^2").unwrap();
        let want = Expr::Pow(Box::new(Expr::Div(Box::new(rat(1)), Box::new(rat(3)))), 2);
        assert_eq!(got, want);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        // -2^2 means -(2^2)
        let got = parse_expression("-2^2").unwrap();
        let want = Expr::Neg(Box::new(Expr::Pow(Box::new(rat(2)), 2)));
        assert_eq!(got, want);
    }

    #[test]
    fn left_associative_subtraction_and_division() {
        let got = parse_expression("8-3-2").unwrap();
        let point = BTreeMap::new();
        assert_eq!(
            got.eval(&point).unwrap(),
            BigRational::from_integer(3.into())
        );
        let got = parse_expression("8/2/2").unwrap();
        assert_eq!(
            got.eval(&point).unwrap(),
            BigRational::from_integer(2.into())
        );
    }

    #[test]
    fn power_chain_is_right_associative() {
        // 2^3^2 = 2^9 = 512
        let got = parse_expression("2^3^2").unwrap();
        assert_eq!(got, Expr::Pow(Box::new(rat(2)), 9));
    }

    #[test]
    fn decimals_become_exact_rationals() {
        let got = parse_expression("3.5").unwrap();
        assert_eq!(got, Expr::Rational(BigRational::new(7.into(), 2.into())));
        // 0.1 is exactly 1/10, not a float approximation
        let got = parse_expression("0.1").unwrap();
        assert_eq!(got, Expr::Rational(BigRational::new(1.into(), 10.into())));
    }

    #[test]
    fn negative_exponent_rejected_with_offset() {
        let err = parse_expression("2^-3").unwrap_err();
        assert!(matches!(err, MathError::Parse { offset: 2, .. }));
    }

    #[test]
    fn unclosed_parenthesis_reports_open_offset() {
        let err = parse_expression("1+(2*3").unwrap_err();
        assert!(matches!(err, MathError::Parse { offset: 2, .. }));
    }

    #[test]
    fn eval_matches_hand_computation() {
        let expr = parse_expression("(x+1)^2 - x^2").unwrap();
        let mut point = BTreeMap::new();
        point.insert("x".to_string(), BigRational::new(3.into(), 2.into()));
        // (5/2)^2 - (3/2)^2 = 25/4 - 9/4 = 4
        assert_eq!(
            expr.eval(&point).unwrap(),
            BigRational::from_integer(4.into())
        );
    }

    #[test]
    fn eval_division_by_zero() {
        let expr = parse_expression("1/(2-2)").unwrap();
        assert_eq!(
            expr.eval(&BTreeMap::new()).unwrap_err(),
            MathError::DivisionByZero
        );
    }

    #[test]
    fn print_then_reparse_is_stable() {
        // print∘parse reaches a fixpoint: the first round trip may rewrite a
        // decimal literal into rational notation (1.25 -> 5/4), after which
        // the text never changes again and the tree is preserved exactly.
        for src in [
            "2+3*4",
            "(1/3)^2",
            "-2^2",
            "8-3-2",
            "a - (b - c)",
            "2*(x + y)^3 / -z",
            "1.25*x - 0.5",
        ] {
            let first = parse_expression(src).unwrap();
            let printed = first.to_string();
            let second = parse_expression(&printed).unwrap();
            assert_eq!(
                second.to_string(),
                printed,
                "print not stable for {src:?} -> {printed:?}"
            );
            assert_eq!(parse_expression(&second.to_string()).unwrap(), second);
        }
    }

    #[test]
    fn print_preserves_trees_without_decimal_literals() {
        for src in [
            "2+3*4",
            "(1/3)^2",
            "-2^2",
            "8-3-2",
            "a - (b - c)",
            "2*(x + y)^3 / -z",
        ] {
            let parsed = parse_expression(src).unwrap();
            let reparsed = parse_expression(&parsed.to_string()).unwrap();
            assert_eq!(parsed, reparsed, "tree changed for {src:?}");
        }
    }
}
