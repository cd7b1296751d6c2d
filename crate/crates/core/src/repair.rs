//! Compile-and-fix loop: diagnostics are grouped per class and method, each
//! errored class gets one fix prompt per round, and replies are merged with
//! the implicated methods as targets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::backend::{Backend, CompileResult, Diagnostic, MethodKey, SourceUnit};
use crate::completion::{build_context, context_section, usable_code};
use crate::llm::{LlmError, Session, Stage};
use crate::model::ModelPackage;
use crate::pipeline::AblationFlags;
use crate::prompts::{render, Templates};

pub const DEFAULT_MAX_ITERATIONS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum RepairError {
    #[error("diagnostic refers to unknown file `{0}`")]
    UnknownPath(String),
    #[error("no diagnostics for class `{0}`")]
    NoDiagnostics(String),
}

/// Diagnostics of one unit and the methods they fall in.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassDiagnostics {
    pub path: String,
    pub diagnostics: Vec<Diagnostic>,
    pub methods: BTreeSet<MethodKey>,
    /// The unit does not parse; fixes replace it whole.
    pub unparsed: bool,
}

/// Buckets by unit (keyed by class id). A diagnostic outside every method
/// implicates the class's model operations, or every method when it owns
/// none.
pub fn group_diagnostics(
    ds: &[Diagnostic],
    units: &[SourceUnit],
    backend: &dyn Backend,
    model: &ModelPackage,
) -> Result<BTreeMap<String, ClassDiagnostics>, RepairError> {
    let mut out: BTreeMap<String, ClassDiagnostics> = BTreeMap::new();
    for d in ds {
        let unit = units.iter().find(|u| u.path == d.path).ok_or_else(|| RepairError::UnknownPath(d.path.clone()))?;
        let entry = out
            .entry(unit.class_id.clone())
            .or_insert_with(|| ClassDiagnostics { path: unit.path.clone(), ..Default::default() });
        entry.diagnostics.push(d.clone());
        let tree = match backend.parse_code(unit) {
            Ok(t) => t,
            Err(_) => {
                entry.unparsed = true;
                entry.methods.extend(backend.operation_keys(model, &unit.class_id));
                continue;
            }
        };
        let methods = tree.classes.iter().flat_map(|c| &c.methods);
        match methods.clone().find(|m| m.lines.0 <= d.line && d.line <= m.lines.1) {
            Some(m) => {
                entry.methods.insert(m.key.clone());
            }
            None => {
                let ops = backend.operation_keys(model, &unit.class_id);
                if ops.is_empty() {
                    entry.methods.extend(methods.map(|m| m.key.clone()));
                } else {
                    entry.methods.extend(ops);
                }
            }
        }
    }
    Ok(out)
}

pub fn render_diagnostics(ds: &[Diagnostic]) -> String {
    let mut s = String::new();
    for d in ds {
        let _ = writeln!(
            s,
            "- path: {}\n  kind: {:?}\n  line: {}\n  source: {}\n  message: {}",
            d.path, d.kind, d.line, d.source_line, d.message
        );
    }
    s
}

#[allow(clippy::too_many_arguments)]
pub fn build_fix_prompt(
    class_id: &str,
    compressed_unit: &str,
    diagnostics: &[Diagnostic],
    methods: &BTreeSet<MethodKey>,
    context_text: &str,
    language: &str,
    flags: &AblationFlags,
    templates: &Templates,
) -> Result<String, RepairError> {
    if diagnostics.is_empty() {
        return Err(RepairError::NoDiagnostics(class_id.to_string()));
    }
    let targets: String =
        methods.iter().map(|k| format!("- {}.{}({} parameters)\n", k.class, k.name, k.arity)).collect();
    Ok(render(
        &templates.fix,
        &[
            ("language", language),
            ("unit", compressed_unit.trim_end()),
            ("diagnostics", render_diagnostics(diagnostics).trim_end()),
            ("context", &context_section(templates, context_text, flags)),
            ("targets", targets.trim_end()),
        ],
    ))
}

#[derive(Debug)]
pub struct RepairOutcome {
    pub units: Vec<SourceUnit>,
    pub result: CompileResult,
    /// `(iteration, diagnostic count)` for every compile performed.
    pub history: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
    /// Set when a provider failure stopped the loop early.
    pub provider_error: Option<LlmError>,
}

pub struct RepairSettings<'a> {
    pub max_iterations: usize,
    pub context_budget: usize,
    pub flags: &'a AblationFlags,
    pub templates: &'a Templates,
}

fn fix_class(
    class: &str,
    group: &ClassDiagnostics,
    unit: &SourceUnit,
    model: &ModelPackage,
    session: &Session<'_>,
    backend: &dyn Backend,
    settings: &RepairSettings<'_>,
) -> Result<Result<SourceUnit, String>, LlmError> {
    let shown = if group.unparsed || settings.flags.no_compress {
        unit.text.clone()
    } else {
        match backend.compress(unit, &group.methods) {
            Ok(u) => u.text,
            Err(_) => unit.text.clone(),
        }
    };
    let context = if settings.flags.no_context || model.class(class).is_none() {
        String::new()
    } else {
        build_context(model, class, backend, settings.context_budget).unwrap_or_default()
    };
    let prompt = match build_fix_prompt(
        class,
        &shown,
        &group.diagnostics,
        &group.methods,
        &context,
        backend.language(),
        settings.flags,
        settings.templates,
    ) {
        Ok(p) => p,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let reply = session.ask(Stage::Fix, &prompt)?;
    let fixed = match usable_code(&reply, unit, backend) {
        Ok(u) => u,
        Err(reason) => return Ok(Err(format!("unusable fix, skipped this round: {reason}"))),
    };
    if group.unparsed {
        return Ok(Ok(fixed));
    }
    match backend.merge(unit, &fixed, &group.methods) {
        Ok((merged, report)) => {
            for (loc, why) in report.rejected_edits {
                log::info!("{class}: rejected fix edit at {loc}: {why}");
            }
            Ok(Ok(merged))
        }
        Err(e) => Ok(Err(format!("merge failed: {e}"))),
    }
}

/// Stops when the units compile or after `max_iterations` fix rounds.
/// Growth in the diagnostic count does not stop the loop.
pub fn repair(
    model: &ModelPackage,
    units: &[SourceUnit],
    session: &Session<'_>,
    backend: &dyn Backend,
    settings: &RepairSettings<'_>,
) -> RepairOutcome {
    let mut units = units.to_vec();
    let mut history = Vec::new();
    let mut warnings = Vec::new();
    let mut iteration = 0;
    loop {
        let result = backend.compile_check(&units);
        history.push((iteration, result.diagnostics.len()));
        if result.ok || iteration >= settings.max_iterations {
            return RepairOutcome { units, result, history, warnings, provider_error: None };
        }
        iteration += 1;
        let groups = match group_diagnostics(&result.diagnostics, &units, backend, model) {
            Ok(g) => g,
            Err(e) => {
                warnings.push(format!("cannot attribute diagnostics: {e}"));
                return RepairOutcome { units, result, history, warnings, provider_error: None };
            }
        };
        for (class, group) in &groups {
            let Some(idx) = units.iter().position(|u| u.path == group.path) else { continue };
            match fix_class(class, group, &units[idx], model, session, backend, settings) {
                Ok(Ok(fixed)) => units[idx] = fixed,
                Ok(Err(why)) => warnings.push(format!("round {iteration}, {class}: {why}")),
                Err(e) => {
                    return RepairOutcome {
                        result: backend.compile_check(&units),
                        units,
                        history,
                        warnings,
                        provider_error: Some(e),
                    };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{DiagnosticKind, MiniOoBackend};
    use crate::decompose::passthrough_annotation;
    use crate::llm::ChatRequest;
    use crate::model::parse_model;

    fn model() -> ModelPackage {
        let m =
            parse_model("package hr { class Employee { attr hireDate: Date; op tenure(now: Date): Int; } }").unwrap();
        passthrough_annotation(&m, "Tenure in days.").unwrap()
    }

    fn broken_units(b: &MiniOoBackend, m: &ModelPackage) -> Vec<SourceUnit> {
        let mut units = b.generate_skeleton(m).unwrap();
        let u = units.iter_mut().find(|u| u.class_id == "Employee").unwrap();
        let done = SourceUnit {
            text: "class Employee {\n  method tenure(now: Date): Int {\n    return getHireDates().daysBetween(now);\n  }\n}\n".into(),
            ..u.clone()
        };
        let keys = b.operation_keys(m, "Employee");
        *u = b.merge(u, &done, &keys).unwrap().0;
        units
    }

    const FIX: &str = "```minioo\nclass Employee {\n  method tenure(now: Date): Int {\n    return getHireDate().daysBetween(now);\n  }\n}\n```";

    fn settings<'a>(flags: &'a AblationFlags, t: &'a Templates, max: usize) -> RepairSettings<'a> {
        RepairSettings { max_iterations: max, context_budget: 8000, flags, templates: t }
    }

    #[test]
    fn grouping_by_method_and_file_level() {
        let b = MiniOoBackend::default();
        let m = model();
        let units = broken_units(&b, &m);
        let r = b.compile_check(&units);
        assert_eq!(r.diagnostics.len(), 1);
        let g = group_diagnostics(&r.diagnostics, &units, &b, &m).unwrap();
        assert_eq!(g["Employee"].methods, BTreeSet::from([MethodKey::new("Employee", "tenure", 1)]));
        let twice = [r.diagnostics[0].clone(), r.diagnostics[0].clone()];
        let g = group_diagnostics(&twice, &units, &b, &m).unwrap();
        assert_eq!((g.len(), g["Employee"].methods.len(), g["Employee"].diagnostics.len()), (1, 1, 2));
        let unit = units.iter().find(|u| u.class_id == "Employee").unwrap();
        let top = Diagnostic::new(&unit.path, &unit.text, DiagnosticKind::Other, 1, "file level");
        let g = group_diagnostics(&[top], &units, &b, &m).unwrap();
        assert_eq!(g["Employee"].methods, b.operation_keys(&m, "Employee"));
        assert!(group_diagnostics(&[], &units, &b, &m).unwrap().is_empty());
        let stray = Diagnostic::new("src/Nowhere.mo", "", DiagnosticKind::Other, 1, "x");
        assert_eq!(group_diagnostics(&[stray], &units, &b, &m), Err(RepairError::UnknownPath("src/Nowhere.mo".into())));
    }

    #[test]
    fn fix_prompt_contains_all_fields() {
        let b = MiniOoBackend::default();
        let m = model();
        let units = broken_units(&b, &m);
        let d = b.compile_check(&units).diagnostics;
        let t = Templates::default();
        let flags = AblationFlags::default();
        let keys = BTreeSet::from([MethodKey::new("Employee", "tenure", 1)]);
        let p = build_fix_prompt("Employee", "class Employee {}", &d, &keys, "", "minioo", &flags, &t).unwrap();
        for field in [
            d[0].path.as_str(),
            "UnresolvedSymbol",
            &d[0].line.to_string(),
            d[0].source_line.as_str(),
            d[0].message.as_str(),
        ] {
            assert!(p.contains(field), "{field}");
        }
        assert_eq!(p, build_fix_prompt("Employee", "class Employee {}", &d, &keys, "", "minioo", &flags, &t).unwrap());
        assert!(build_fix_prompt("Employee", "", &[], &keys, "", "minioo", &flags, &t).is_err());
    }

    #[test]
    fn clean_units_need_no_calls() {
        let b = MiniOoBackend::default();
        let m = model();
        let units = b.generate_skeleton(&m).unwrap();
        let p = |_: &ChatRequest| -> Result<String, LlmError> { panic!("no call expected") };
        let s = Session::new(&p, "m", 0.2, 100, 0);
        let (f, t) = (AblationFlags::default(), Templates::default());
        let out = repair(&m, &units, &s, &b, &settings(&f, &t, 3));
        assert!(out.result.ok);
        assert_eq!(out.history, vec![(0, 0)]);
    }

    #[test]
    fn typo_fixed_in_one_round() {
        let b = MiniOoBackend::default();
        let m = model();
        let units = broken_units(&b, &m);
        let p = |_: &ChatRequest| -> Result<String, LlmError> { Ok(FIX.into()) };
        let s = Session::new(&p, "m", 0.2, 100, 0);
        let (f, t) = (AblationFlags::default(), Templates::default());
        let out = repair(&m, &units, &s, &b, &settings(&f, &t, 3));
        assert!(out.result.ok, "{:?}", out.result);
        assert_eq!(out.history, vec![(0, 1), (1, 0)]);
        assert_eq!(s.count(Stage::Fix), 1);
    }

    #[test]
    fn zero_iterations_returns_immediately() {
        let b = MiniOoBackend::default();
        let m = model();
        let units = broken_units(&b, &m);
        let p = |_: &ChatRequest| -> Result<String, LlmError> { panic!("no call expected") };
        let s = Session::new(&p, "m", 0.2, 100, 0);
        let (f, t) = (AblationFlags::default(), Templates::default());
        let out = repair(&m, &units, &s, &b, &settings(&f, &t, 0));
        assert!(!out.result.ok);
        assert_eq!(out.history, vec![(0, 1)]);
    }

    #[test]
    fn bound_holds_when_fixes_do_not_help() {
        let b = MiniOoBackend::default();
        let m = model();
        let units = broken_units(&b, &m);
        let p = |r: &ChatRequest| -> Result<String, LlmError> {
            Ok(r.user.lines().find(|l| l.contains("getHireDates")).map(|_| "nothing").unwrap_or("x").into())
        };
        let s = Session::new(&p, "m", 0.2, 100, 0);
        let (f, t) = (AblationFlags::default(), Templates::default());
        let out = repair(&m, &units, &s, &b, &settings(&f, &t, 2));
        assert!(!out.result.ok);
        assert_eq!(out.history.len(), 3);
        assert_eq!(s.count(Stage::Fix), 2);
        assert_eq!(out.units, units);
    }

    #[test]
    fn provider_failure_stops_loop() {
        let b = MiniOoBackend::default();
        let m = model();
        let units = broken_units(&b, &m);
        let p = |_: &ChatRequest| -> Result<String, LlmError> { Err(LlmError::Timeout) };
        let s = Session::new(&p, "m", 0.2, 100, 0);
        let (f, t) = (AblationFlags::default(), Templates::default());
        let out = repair(&m, &units, &s, &b, &settings(&f, &t, 3));
        assert!(matches!(out.provider_error, Some(LlmError::Timeout)));
        assert!(!out.result.ok);
    }
}
