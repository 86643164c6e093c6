//! Bitvector expressions and a count-preserving bitblaster.

mod blast;
mod expr;
pub mod parse;

pub use blast::{bitblast, Bit, BlastResult, Blaster, InputDecl};
pub use expr::{mask, BinaryOp, BvExpr, UnaryOp, MAX_WIDTH};
pub use parse::{parse_expr, parse_mbv, MbvFile};

use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BvError {
    #[error("width {0} is outside 1..=64")]
    BadWidth(u32),
    #[error("constant {value} does not fit in {width} bits")]
    ConstOverflow { value: u64, width: u32 },
    #[error("operator `{op}` expects equal widths, got {left} and {right}")]
    WidthMismatch { op: &'static str, left: u32, right: u32 },
    #[error("operator `{op}` expects a boolean (width 1), got width {width}")]
    NotBoolean { op: &'static str, width: u32 },
    #[error("no value for input `{0}`")]
    MissingInput(String),
    #[error("value {value} of input `{name}` does not fit in {width} bits")]
    InputOverflow { name: String, value: u64, width: u32 },
    #[error("input `{0}` redeclared with a different width or control")]
    InconsistentInput(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            message: message.into(),
        }
    }
}

/// Evaluates `e` on concrete input values.
pub fn eval_concrete(e: &Arc<BvExpr>, env: &HashMap<String, u64>) -> Result<u64, BvError> {
    e.eval(env)
}
