//! Chemical equation parsing and balancing.
//!
//! Balancing builds the element x species stoichiometric matrix (reactant
//! columns positive, product columns negative), reduces it with exact
//! rational Gaussian elimination, and requires a one-dimensional nullspace.
//! The basis vector is scaled to positive integers with overall gcd 1.
//!
//! Grammar: species separated by '+', sides separated by "->" or "=";
//! formulas are element symbols (`[A-Z][a-z]?`) with optional counts and
//! nested parenthesized groups with multipliers, e.g. `Ca(OH)2`. Leading
//! integer coefficients on input species are rejected. Ionic charges and
//! hydrate dots are outside the grammar.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

use super::MathError;

/// One species: the original formula text plus its element counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Species {
    pub formula: String,
    pub elements: BTreeMap<String, u64>,
}

/// A parsed, unbalanced chemical equation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChemEquation {
    pub reactants: Vec<Species>,
    pub products: Vec<Species>,
}

impl ChemEquation {
    pub fn species(&self) -> impl Iterator<Item = &Species> {
        self.reactants.iter().chain(self.products.iter())
    }
}

impl fmt::Display for ChemEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |items: &[Species]| {
            items
                .iter()
                .map(|s| s.formula.clone())
                .collect::<Vec<_>>()
                .join(" + ")
        };
        write!(f, "{} -> {}", side(&self.reactants), side(&self.products))
    }
}

/// Balanced coefficients, reactants first then products, gcd 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BalanceResult {
    pub coefficients: Vec<BigUint>,
}

impl BalanceResult {
    /// Coefficients as u64 where they fit (they do for any sane equation).
    pub fn as_u64s(&self) -> Option<Vec<u64>> {
        self.coefficients
            .iter()
            .map(|c| u64::try_from(c).ok())
            .collect()
    }
}

/// Render a balanced equation, printing every coefficient explicitly:
/// `2 H2 + 1 O2 -> 2 H2O`.
pub fn format_balanced(eq: &ChemEquation, result: &BalanceResult) -> String {
    let mut parts: Vec<String> = Vec::new();
    for (i, species) in eq.reactants.iter().enumerate() {
        parts.push(format!("{} {}", result.coefficients[i], species.formula));
    }
    let reactants = parts.join(" + ");
    parts.clear();
    for (i, species) in eq.products.iter().enumerate() {
        let coeff = &result.coefficients[eq.reactants.len() + i];
        parts.push(format!("{coeff} {}", species.formula));
    }
    format!("{reactants} -> {}", parts.join(" + "))
}

/// Parse `reactants -> products` (or `=` as separator).
pub fn parse_chemical_equation(text: &str) -> Result<ChemEquation, MathError> {
    let arrow_positions: Vec<usize> = text.match_indices("->").map(|(i, _)| i).collect();
    let equals_positions: Vec<usize> = text.match_indices('=').map(|(i, _)| i).collect();

    let (sep_at, sep_len) = match (arrow_positions.as_slice(), equals_positions.as_slice()) {
        ([at], []) => (*at, 2),
        ([], [at]) => (*at, 1),
        ([], []) => {
            return Err(MathError::parse(
                text.len(),
                "expected '->' or '=' between sides",
            ))
        }
        _ => {
            let second = arrow_positions
                .iter()
                .chain(&equals_positions)
                .copied()
                .max()
                .unwrap_or(0);
            return Err(MathError::parse(second, "more than one side separator"));
        }
    };

    let reactants = parse_side(&text[..sep_at], 0)?;
    let products = parse_side(&text[sep_at + sep_len..], sep_at + sep_len)?;
    Ok(ChemEquation {
        reactants,
        products,
    })
}

fn parse_side(side: &str, base: usize) -> Result<Vec<Species>, MathError> {
    let mut species = Vec::new();
    for (piece_start, piece_text) in split_inclusive_plus(side) {
        species.push(parse_species(piece_text, base + piece_start)?);
    }
    Ok(species)
}

fn split_inclusive_plus(side: &str) -> Vec<(usize, &str)> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, c) in side.char_indices() {
        if c == '+' {
            pieces.push((start, &side[start..i]));
            start = i + 1;
        }
    }
    pieces.push((start, &side[start..]));
    pieces
}

fn parse_species(raw: &str, base: usize) -> Result<Species, MathError> {
    let leading_ws = raw.len() - raw.trim_start().len();
    let trimmed = raw.trim();
    let offset = base + leading_ws;
    if trimmed.is_empty() {
        return Err(MathError::parse(offset, "expected a species"));
    }
    if trimmed.as_bytes()[0].is_ascii_digit() {
        return Err(MathError::parse(
            offset,
            "leading coefficients are not allowed on input species",
        ));
    }
    let elements = parse_formula(trimmed, offset)?;
    Ok(Species {
        formula: trimmed.to_string(),
        elements,
    })
}

fn parse_formula(formula: &str, base: usize) -> Result<BTreeMap<String, u64>, MathError> {
    let bytes = formula.as_bytes();
    let (elements, end) = parse_group(bytes, 0, base)?;
    if end != bytes.len() {
        return Err(MathError::parse(
            base + end,
            "unexpected character in formula",
        ));
    }
    if elements.is_empty() {
        return Err(MathError::parse(base, "empty formula"));
    }
    Ok(elements)
}

/// Parse a run of items up to a closing parenthesis or end of input.
fn parse_group(
    bytes: &[u8],
    mut pos: usize,
    base: usize,
) -> Result<(BTreeMap<String, u64>, usize), MathError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    while pos < bytes.len() && bytes[pos] != b')' {
        match bytes[pos] {
            b'(' => {
                let open = pos;
                let (inner, after) = parse_group(bytes, pos + 1, base)?;
                if after >= bytes.len() || bytes[after] != b')' {
                    return Err(MathError::parse(base + open, "unclosed parenthesis"));
                }
                pos = after + 1;
                let (multiplier, next) = parse_count(bytes, pos, base)?;
                pos = next;
                for (el, n) in inner {
                    *counts.entry(el).or_insert(0) += n * multiplier;
                }
            }
            b'A'..=b'Z' => {
                let mut symbol = (bytes[pos] as char).to_string();
                pos += 1;
                if pos < bytes.len() && bytes[pos].is_ascii_lowercase() {
                    symbol.push(bytes[pos] as char);
                    pos += 1;
                }
                let (count, next) = parse_count(bytes, pos, base)?;
                pos = next;
                *counts.entry(symbol).or_insert(0) += count;
            }
            _ => {
                return Err(MathError::parse(
                    base + pos,
                    "expected an element symbol or '(' in formula",
                ))
            }
        }
    }
    Ok((counts, pos))
}

/// Optional positive integer count; absent means 1.
fn parse_count(bytes: &[u8], mut pos: usize, base: usize) -> Result<(u64, usize), MathError> {
    let start = pos;
    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
        pos += 1;
    }
    if pos == start {
        return Ok((1, pos));
    }
    let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
    let count: u64 = text
        .parse()
        .map_err(|_| MathError::parse(base + start, "count too large"))?;
    if count == 0 {
        return Err(MathError::parse(base + start, "counts must be positive"));
    }
    Ok((count, pos))
}

/// Balance an equation by solving the stoichiometric nullspace exactly.
pub fn balance(eq: &ChemEquation) -> Result<BalanceResult, MathError> {
    let species_count = eq.reactants.len() + eq.products.len();

    // element rows in first-appearance order for determinism
    let mut elements: Vec<String> = Vec::new();
    for species in eq.species() {
        for el in species.elements.keys() {
            if !elements.contains(el) {
                elements.push(el.clone());
            }
        }
    }

    let mut matrix = vec![vec![BigRational::zero(); species_count]; elements.len()];
    for (col, species) in eq.species().enumerate() {
        let sign = if col < eq.reactants.len() { 1 } else { -1 };
        for (el, count) in &species.elements {
            let row = elements
                .iter()
                .position(|e| e == el)
                .expect("element registered");
            matrix[row][col] = BigRational::from_integer(BigInt::from(sign * *count as i64));
        }
    }

    let pivots = reduce(&mut matrix);
    let free: Vec<usize> = (0..species_count).filter(|c| !pivots.contains(c)).collect();
    match free.len() {
        0 => return Err(MathError::NoSolution),
        1 => {}
        n => return Err(MathError::Ambiguous { nullity: n }),
    }
    let free_col = free[0];

    // nullspace basis with the free coordinate set to 1
    let mut basis = vec![BigRational::zero(); species_count];
    basis[free_col] = BigRational::one();
    for (row, pivot_col) in pivots.iter().enumerate() {
        basis[*pivot_col] = -matrix[row][free_col].clone();
    }

    // clear denominators
    let mut lcm = BigInt::one();
    for value in &basis {
        lcm = lcm.lcm(value.denom());
    }
    let scaled: Vec<BigInt> = basis
        .iter()
        .map(|v| (v * BigRational::from_integer(lcm.clone())).to_integer())
        .collect();

    // a valid balancing needs every coefficient strictly one-signed
    if scaled.iter().any(|v| v.is_zero()) {
        return Err(MathError::SignConflict);
    }
    let negatives = scaled.iter().filter(|v| v.is_negative()).count();
    if negatives != 0 && negatives != scaled.len() {
        return Err(MathError::SignConflict);
    }
    let positive: Vec<BigInt> = if negatives == scaled.len() {
        scaled.iter().map(|v| -v).collect()
    } else {
        scaled
    };

    let mut gcd = BigInt::zero();
    for value in &positive {
        gcd = gcd.gcd(value);
    }
    let coefficients = positive
        .iter()
        .map(|v| {
            (v / &gcd)
                .to_biguint()
                .expect("positive after sign normalization")
        })
        .collect();
    Ok(BalanceResult { coefficients })
}

/// In-place reduced row echelon form; returns pivot columns.
#[allow(clippy::needless_range_loop)]
fn reduce(matrix: &mut [Vec<BigRational>]) -> Vec<usize> {
    let rows = matrix.len();
    let cols = if rows == 0 { 0 } else { matrix[0].len() };
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let Some(pivot_row) = (row..rows).find(|&i| !matrix[i][col].is_zero()) else {
            continue;
        };
        matrix.swap(row, pivot_row);
        let inv = matrix[row][col].recip();
        for j in col..cols {
            let scaled = &matrix[row][j] * &inv;
            matrix[row][j] = scaled;
        }
        for i in 0..rows {
            if i != row && !matrix[i][col].is_zero() {
                let factor = matrix[i][col].clone();
                for j in col..cols {
                    let sub = &factor * &matrix[row][j];
                    matrix[i][j] -= sub;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Exact atom-conservation check: for every element the weighted reactant
/// count equals the weighted product count.
pub fn conserves_atoms(eq: &ChemEquation, result: &BalanceResult) -> bool {
    let mut totals: BTreeMap<&str, BigInt> = BTreeMap::new();
    for (col, species) in eq.species().enumerate() {
        let sign = if col < eq.reactants.len() { 1 } else { -1 };
        let coeff = BigInt::from_biguint(Sign::Plus, result.coefficients[col].clone());
        for (el, count) in &species.elements {
            let delta = &coeff * BigInt::from(sign * *count as i64);
            *totals.entry(el.as_str()).or_insert_with(BigInt::zero) += delta;
        }
    }
    totals.values().all(|v| v.is_zero())
}
