//! The target-language-neutral code backend contract, the MiniOO reference
//! backend, and an adapter that drives an external command-line compiler.

pub mod external;
mod minioo_backend;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelPackage;

pub use external::{external_compile, ExternalBackend, ExternalError, ToolConfig};
pub use minioo_backend::MiniOoBackend;

/// One generated source file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    /// Path relative to the workspace `src/` directory.
    pub path: String,
    /// Name of the model class (or enum / factory) the file implements.
    pub class_id: String,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticKind {
    Syntax,
    UnresolvedSymbol,
    TypeMismatch,
    Other,
}

/// A compiler error record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub kind: DiagnosticKind,
    /// 1-based.
    pub line: usize,
    /// Literal text of `line` in the file at diagnosis time.
    pub source_line: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: &str, text: &str, kind: DiagnosticKind, line: usize, message: impl Into<String>) -> Self {
        let line = line.max(1);
        Diagnostic {
            path: path.to_string(),
            kind,
            line,
            source_line: text.lines().nth(line - 1).unwrap_or("").to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {:?}: {}\n    {}", self.path, self.line, self.kind, self.message, self.source_line.trim())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileResult {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl CompileResult {
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        CompileResult { ok: diagnostics.is_empty(), diagnostics }
    }
}

/// A test program to run against a set of units.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestProgram {
    pub id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub passed: bool,
    pub failure_message: Option<String>,
}

impl TestOutcome {
    pub fn pass(id: &str) -> Self {
        TestOutcome { test_id: id.to_string(), passed: true, failure_message: None }
    }

    pub fn fail(id: &str, message: impl Into<String>) -> Self {
        TestOutcome { test_id: id.to_string(), passed: false, failure_message: Some(message.into()) }
    }
}

/// Identifies a method: owning class, name and arity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodKey {
    pub class: String,
    pub name: String,
    pub arity: usize,
}

impl MethodKey {
    pub fn new(class: impl Into<String>, name: impl Into<String>, arity: usize) -> Self {
        MethodKey { class: class.into(), name: name.into(), arity }
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}/{}", self.class, self.name, self.arity)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub replaced_methods: Vec<MethodKey>,
    pub added_helpers: Vec<MethodKey>,
    pub added_imports: Vec<String>,
    /// `(location, reason)` for every change outside the permitted regions.
    pub rejected_edits: Vec<(String, String)>,
}

/// Backend-neutral outline of a parsed unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeTree {
    pub imports: Vec<String>,
    pub classes: Vec<ClassOutline>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassOutline {
    pub name: String,
    pub methods: Vec<MethodOutline>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodOutline {
    pub key: MethodKey,
    /// Rendered signature, as used in context listings.
    pub signature: String,
    /// First and last line of the method (docstring included).
    pub lines: (usize, usize),
    /// Whether the body is the unsupported-operation trap.
    pub is_trap: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum BackendError {
    #[error("operation `{0}` has no method annotation")]
    UnannotatedOperation(String),
    #[error("name clash in generated code: {0}")]
    NameClash(String),
    #[error("source does not parse: {}", first_message(.0))]
    Syntax(Vec<Diagnostic>),
    #[error("completion does not parse: {}", first_message(.0))]
    UnparseableCompletion(Vec<Diagnostic>),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

fn first_message(ds: &[Diagnostic]) -> String {
    ds.first().map(|d| format!("line {}: {}", d.line, d.message)).unwrap_or_default()
}

/// Everything the pipeline needs from a target language.
pub trait Backend: Send + Sync {
    /// Short name, also used as the fenced-code language tag.
    fn language(&self) -> &str;

    fn file_extension(&self) -> &str;

    /// Template-based code for an annotated model: one unit per class, with
    /// each operation's body set to the unsupported-operation trap.
    fn generate_skeleton(&self, model: &ModelPackage) -> Result<Vec<SourceUnit>, BackendError>;

    /// Public method signatures the skeleton gives `class`, one per line.
    fn skeleton_signatures(&self, model: &ModelPackage, class: &str) -> Vec<String>;

    /// Method keys of the model operations owned by `class`.
    fn operation_keys(&self, model: &ModelPackage, class: &str) -> BTreeSet<MethodKey>;

    fn parse_code(&self, unit: &SourceUnit) -> Result<CodeTree, Vec<Diagnostic>>;

    /// Strips comments, docstrings (except those of `keep`), field
    /// initializers and the bodies of methods outside `keep`.
    fn compress(&self, unit: &SourceUnit, keep: &BTreeSet<MethodKey>) -> Result<SourceUnit, BackendError>;

    fn merge(
        &self,
        base: &SourceUnit,
        completed: &SourceUnit,
        targets: &BTreeSet<MethodKey>,
    ) -> Result<(SourceUnit, MergeReport), BackendError>;

    fn compile_check(&self, units: &[SourceUnit]) -> CompileResult;

    fn run_tests(&self, units: &[SourceUnit], tests: &[TestProgram]) -> Vec<TestOutcome>;

    /// Splits one source file holding several top-level types into units.
    fn split_units(&self, text: &str) -> Result<Vec<SourceUnit>, Vec<Diagnostic>>;
}
