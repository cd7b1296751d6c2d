//! Hybrid code generation: deterministic skeletons generated from a class
//! model, with the unimplemented operations completed and compile-repaired
//! by a chat model, plus a pass@k / compilation@k evaluation harness.
//!
//! Everything runs offline against the bundled MiniOO language and a
//! record/replay chat provider.

pub mod backend;
pub mod completion;
pub mod config;
pub mod dates;
pub mod decompose;
pub mod eval;
pub mod llm;
pub mod metrics;
pub mod minioo;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod repair;

pub use backend::{Backend, CompileResult, Diagnostic, DiagnosticKind, MethodKey, SourceUnit};
pub use model::{ModelPackage, OpRef};

/// Probability values produced by the evaluation harness.
pub type Probability = f64;
/// Exact pass@k arithmetic.
pub type ExactProbability = num_rational::Rational64;
/// Metric report over binary64 values; the form written to disk.
pub type MetricReport = metrics::MetricReport<f64>;
/// Metric report computed in exact rational arithmetic.
pub type ExactMetricReport = metrics::MetricReport<ExactProbability>;
