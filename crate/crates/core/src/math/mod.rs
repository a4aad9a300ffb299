//! Deterministic solvers for the three math problem classes plus tool
//! dispatch: expression calculation/simplification, base conversion, and
//! chemical equation balancing.
//!
//! Everything here uses exact rational arithmetic; no floating point enters
//! any solver.

mod baseconv;
mod chem;
mod dispatch;
mod expr;
mod poly;

pub use baseconv::convert_base;
pub use chem::{
    balance, conserves_atoms, format_balanced, parse_chemical_equation, BalanceResult,
    ChemEquation, Species,
};
pub use dispatch::{detect_tool, dispatch_rule_mode, execute_tool, parse_tool_call, ToolCall};
pub use expr::{parse_expression, Expr};
pub use poly::{simplify, Polynomial};

/// Errors shared by all math tools.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MathError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("division by a variable-containing expression")]
    NonPolynomialDivision,
    #[error("invalid digit {digit:?} at byte {offset} for base {base}")]
    InvalidDigit {
        digit: char,
        offset: usize,
        base: u32,
    },
    #[error("base {base} outside supported range 2..=36")]
    BaseOutOfRange { base: u32 },
    #[error("no balancing solution exists")]
    NoSolution,
    #[error("equation is ambiguous: {nullity} independent reactions")]
    Ambiguous { nullity: usize },
    #[error("no strictly positive coefficient scaling exists")]
    SignConflict,
    #[error("no tool matched the query")]
    NoToolMatched,
}

impl MathError {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        MathError::Parse {
            offset,
            message: message.into(),
        }
    }
}
