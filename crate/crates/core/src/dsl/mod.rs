//! Line-oriented text formats for chain-of-thought programs, counter
//! machines and assembler source, with canonical printers.

mod asm;
mod cm;
mod cot;
mod lex;

use std::fmt;

use thiserror::Error;

pub use asm::{parse_asm, print_asm};
pub use cm::{parse_cm, print_cm};
pub use cot::{parse_cot_program, parse_expr, Expr, print_cot_program, print_formula, print_term};

/// A region of the source text. `line` and `column` are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub len: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    /// Sorted, deduplicated descriptions of what would have been accepted.
    pub expected: Vec<String>,
    pub found: String,
    pub message: String,
}

impl ParseError {
    pub(crate) fn expected(span: SourceSpan, expected: &[&str], found: &str) -> Self {
        let mut exp: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        exp.sort();
        exp.dedup();
        let message = format!("expected {}, found {}", exp.join(" or "), found);
        ParseError {
            span,
            expected: exp,
            found: found.to_string(),
            message,
        }
    }

    pub(crate) fn semantic(span: SourceSpan, found: &str, message: String) -> Self {
        ParseError {
            span,
            expected: Vec::new(),
            found: found.to_string(),
            message,
        }
    }
}
