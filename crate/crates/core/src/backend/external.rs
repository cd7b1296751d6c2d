//! Runs a command-line compiler over written units and maps its output to
//! diagnostics through a regular expression.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::*;
use crate::model::ModelPackage;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("compiler `{0}` not found")]
    ToolNotFound(String),
    #[error("compiler timed out after {0}s")]
    ToolTimeout(u64),
    #[error("compiler failed but no output line matched the diagnostic pattern")]
    PatternMismatch { raw: String },
    #[error("invalid tool configuration: {0}")]
    Config(String),
    #[error("workspace i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// How to invoke an external compiler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    /// Shell-style command line; `{files}` expands to the unit paths.
    pub command: String,
    pub timeout_secs: u64,
    /// Regex with named captures `path`, `line` and `message`.
    pub pattern: String,
    /// Lower-case message keywords mapped to diagnostic kinds, first match
    /// wins; unmatched messages are `Other`.
    #[serde(default = "default_keywords")]
    pub keywords: Vec<(String, DiagnosticKind)>,
}

pub fn default_keywords() -> Vec<(String, DiagnosticKind)> {
    use DiagnosticKind::*;
    [
        ("mismatch", TypeMismatch),
        ("incompatible", TypeMismatch),
        ("cannot convert", TypeMismatch),
        ("cannot find", UnresolvedSymbol),
        ("unknown", UnresolvedSymbol),
        ("undefined", UnresolvedSymbol),
        ("undeclared", UnresolvedSymbol),
        ("unresolved", UnresolvedSymbol),
        ("not found", UnresolvedSymbol),
        ("syntax", Syntax),
        ("unexpected", Syntax),
        ("expected", Syntax),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl ToolConfig {
    pub fn new(command: &str, timeout_secs: u64, pattern: &str) -> Self {
        ToolConfig {
            command: command.to_string(),
            timeout_secs,
            pattern: pattern.to_string(),
            keywords: default_keywords(),
        }
    }

    fn kind_of(&self, message: &str) -> DiagnosticKind {
        let lower = message.to_lowercase();
        self.keywords.iter().find(|(k, _)| lower.contains(k.as_str())).map_or(DiagnosticKind::Other, |(_, kind)| *kind)
    }
}

fn expand_command(template: &str, files: &[String]) -> Result<Vec<String>, ExternalError> {
    let words = shlex::split(template).ok_or_else(|| ExternalError::Config(format!("cannot split `{template}`")))?;
    let mut out = Vec::new();
    for w in words {
        if w == "{files}" {
            out.extend(files.iter().cloned());
        } else {
            out.push(w.replace("{files}", &files.join(" ")));
        }
    }
    if out.is_empty() {
        return Err(ExternalError::Config("empty command".into()));
    }
    Ok(out)
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = r {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn relative_path(raw: &str, root: &Path) -> String {
    let p = Path::new(raw);
    let p = p.strip_prefix(root).unwrap_or(p);
    let s = p.to_string_lossy().into_owned();
    s.strip_prefix("./").map(str::to_string).unwrap_or(s)
}

/// Writes `units` into a fresh directory, runs the tool there and parses
/// its combined output.
pub fn external_compile(units: &[SourceUnit], tool: &ToolConfig) -> Result<CompileResult, ExternalError> {
    let pattern = Regex::new(&tool.pattern).map_err(|e| ExternalError::Config(e.to_string()))?;
    for cap in ["path", "line", "message"] {
        if !pattern.capture_names().flatten().any(|n| n == cap) {
            return Err(ExternalError::Config(format!("pattern lacks the `{cap}` capture")));
        }
    }
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    for u in units {
        let target = root.join(&u.path);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&target, &u.text)?;
    }
    let files: Vec<String> = units.iter().map(|u| u.path.clone()).collect();
    let argv = expand_command(&tool.command, &files)?;
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(root)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ExternalError::ToolNotFound(argv[0].clone()),
            _ => ExternalError::Io(e),
        })?;
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let deadline = Instant::now() + Duration::from_secs(tool.timeout_secs);
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break s;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ExternalError::ToolTimeout(tool.timeout_secs));
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let raw = format!("{}{}", out.join().unwrap_or_default(), err.join().unwrap_or_default());

    let mut diagnostics = Vec::new();
    for line in raw.lines() {
        let Some(c) = pattern.captures(line) else { continue };
        let path = relative_path(&c["path"], root);
        let line_no: usize = c["line"].parse().unwrap_or(1);
        let message = c["message"].trim().to_string();
        let text = std::fs::read_to_string(root.join(&path)).unwrap_or_default();
        diagnostics.push(Diagnostic::new(&path, &text, tool.kind_of(&message), line_no, message));
    }
    if diagnostics.is_empty() && !status.success() {
        log::warn!("unparsed compiler output:\n{raw}");
        return Err(ExternalError::PatternMismatch { raw });
    }
    Ok(CompileResult::from_diagnostics(diagnostics))
}

/// MiniOO for everything except compilation, which goes to an external
/// tool. Tool failures surface as a single `Other` diagnostic.
#[derive(Clone, Debug)]
pub struct ExternalBackend {
    pub inner: MiniOoBackend,
    pub tool: ToolConfig,
}

impl Backend for ExternalBackend {
    fn language(&self) -> &str {
        self.inner.language()
    }

    fn file_extension(&self) -> &str {
        self.inner.file_extension()
    }

    fn generate_skeleton(&self, model: &ModelPackage) -> Result<Vec<SourceUnit>, BackendError> {
        self.inner.generate_skeleton(model)
    }

    fn skeleton_signatures(&self, model: &ModelPackage, class: &str) -> Vec<String> {
        self.inner.skeleton_signatures(model, class)
    }

    fn operation_keys(&self, model: &ModelPackage, class: &str) -> BTreeSet<MethodKey> {
        self.inner.operation_keys(model, class)
    }

    fn parse_code(&self, unit: &SourceUnit) -> Result<CodeTree, Vec<Diagnostic>> {
        self.inner.parse_code(unit)
    }

    fn compress(&self, unit: &SourceUnit, keep: &BTreeSet<MethodKey>) -> Result<SourceUnit, BackendError> {
        self.inner.compress(unit, keep)
    }

    fn merge(
        &self,
        base: &SourceUnit,
        completed: &SourceUnit,
        targets: &BTreeSet<MethodKey>,
    ) -> Result<(SourceUnit, MergeReport), BackendError> {
        self.inner.merge(base, completed, targets)
    }

    fn compile_check(&self, units: &[SourceUnit]) -> CompileResult {
        match external_compile(units, &self.tool) {
            Ok(r) => r,
            Err(e) => {
                let path = units.first().map_or("", |u| u.path.as_str());
                let text = units.first().map_or("", |u| u.text.as_str());
                CompileResult::from_diagnostics(vec![Diagnostic::new(
                    path,
                    text,
                    DiagnosticKind::Other,
                    1,
                    format!("external compiler: {e}"),
                )])
            }
        }
    }

    fn run_tests(&self, units: &[SourceUnit], tests: &[TestProgram]) -> Vec<TestOutcome> {
        self.inner.run_tests(units, tests)
    }

    fn split_units(&self, text: &str) -> Result<Vec<SourceUnit>, Vec<Diagnostic>> {
        self.inner.split_units(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATTERN: &str = r"^(?P<path>[^:\s]+):(?P<line>\d+): error: (?P<message>.*)$";

    fn units() -> Vec<SourceUnit> {
        vec![SourceUnit {
            path: "src/A.x".into(),
            class_id: "A".into(),
            text: (1..=20).map(|i| format!("line {i}\n")).collect(),
        }]
    }

    #[test]
    fn clean_exit_is_ok() {
        let r = external_compile(&units(), &ToolConfig::new("true {files}", 5, PATTERN)).unwrap();
        assert!(r.ok);
    }

    #[test]
    fn matched_line_maps_to_diagnostic() {
        let cmd = "sh -c 'echo \"src/A.x:12: error: unknown name b\" >&2; exit 1'";
        let r = external_compile(&units(), &ToolConfig::new(cmd, 5, PATTERN)).unwrap();
        assert!(!r.ok);
        let d = &r.diagnostics[0];
        assert_eq!(d.path, "src/A.x");
        assert_eq!(d.line, 12);
        assert_eq!(d.kind, DiagnosticKind::UnresolvedSymbol);
        assert_eq!(d.message, "unknown name b");
        assert_eq!(d.source_line, "line 12");
    }

    #[test]
    fn files_placeholder_expands() {
        let cmd = "sh -c 'test -f \"$1\" || exit 3' sh {files}";
        let r = external_compile(&units(), &ToolConfig::new(cmd, 5, PATTERN)).unwrap();
        assert!(r.ok);
    }

    #[test]
    fn unmatched_failure_is_pattern_mismatch() {
        let cmd = "sh -c 'echo boom; exit 2'";
        match external_compile(&units(), &ToolConfig::new(cmd, 5, PATTERN)) {
            Err(ExternalError::PatternMismatch { raw }) => assert!(raw.contains("boom")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_tool_and_timeout() {
        let r = external_compile(&units(), &ToolConfig::new("no-such-compiler-9f2 {files}", 5, PATTERN));
        assert!(matches!(r, Err(ExternalError::ToolNotFound(_))));
        let r = external_compile(&units(), &ToolConfig::new("sleep 5", 1, PATTERN));
        assert!(matches!(r, Err(ExternalError::ToolTimeout(1))));
    }

    #[test]
    fn keyword_table() {
        let t = ToolConfig::new("x", 1, PATTERN);
        assert_eq!(t.kind_of("type mismatch: Int vs String"), DiagnosticKind::TypeMismatch);
        assert_eq!(t.kind_of("expected `;`"), DiagnosticKind::Syntax);
        assert_eq!(t.kind_of("something odd"), DiagnosticKind::Other);
    }
}
