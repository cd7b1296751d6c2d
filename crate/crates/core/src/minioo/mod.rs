//! MiniOO: a small class-based language with a parser, printer, type
//! checker and interpreter. File extensions are `.mo` (library) and `.mot`
//! (test program).

pub mod ast;
pub mod check;
pub mod interp;
mod lexer;
pub mod parser;
pub mod printer;

pub use check::{check_units, CheckUnit};
pub use interp::{run_test, DEFAULT_STEP_BUDGET};
pub use parser::{parse_program, ParseError};
pub use printer::print_program;

use crate::backend::{Diagnostic, DiagnosticKind};

/// Parses `text`, mapping a failure to a Syntax diagnostic for `path`.
pub fn parse_unit(path: &str, text: &str) -> Result<ast::Program, Diagnostic> {
    parse_program(text).map_err(|e| Diagnostic::new(path, text, DiagnosticKind::Syntax, e.line, e.message))
}
