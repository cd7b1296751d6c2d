//! Per-class completion: each class owning operations gets one prompt
//! holding its compressed unit, the signatures of related classes and the
//! list of methods to implement. The reply is merged back structurally.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::backend::{Backend, BackendError, MergeReport, MethodKey, SourceUnit};
use crate::llm::{extract_code_block, LlmError, Session, Stage};
use crate::model::{ModelError, ModelPackage};
use crate::pipeline::AblationFlags;
use crate::prompts::{render, Templates};

pub const DEFAULT_CONTEXT_BUDGET: usize = 8000;
pub const TRUNCATION_MARKER: &str = "…truncated";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionTask {
    pub class_id: String,
    pub unit: SourceUnit,
    /// Non-empty.
    pub targets: BTreeSet<MethodKey>,
    pub context_text: String,
}

/// Classes owning at least one operation, in declaration order.
pub fn select_targets(m: &ModelPackage) -> Vec<String> {
    m.classes.iter().filter(|c| !c.operations.is_empty()).map(|c| c.name.clone()).collect()
}

/// `class X` header plus signature lines for each related class, cut to
/// `budget` characters with a trailing marker.
pub fn build_context(
    m: &ModelPackage,
    class_id: &str,
    backend: &dyn Backend,
    budget: usize,
) -> Result<String, ModelError> {
    let mut text = String::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for c in m.related_classes(class_id)? {
        let _ = writeln!(text, "class {}", c.name);
        for sig in backend.skeleton_signatures(m, &c.name) {
            if seen.insert(format!("{}::{sig}", c.name)) {
                let _ = writeln!(text, "  {sig}");
            }
        }
    }
    if text.chars().count() > budget {
        let keep = budget.saturating_sub(TRUNCATION_MARKER.chars().count() + 1);
        let mut cut: String = text.chars().take(keep).collect();
        cut.push('\n');
        cut.push_str(TRUNCATION_MARKER);
        cut.push('\n');
        text = cut;
    }
    Ok(text)
}

fn target_list(targets: &BTreeSet<MethodKey>) -> String {
    targets.iter().map(|t| format!("- {}.{}({} parameters)\n", t.class, t.name, t.arity)).collect()
}

pub(crate) fn context_section(templates: &Templates, context: &str, flags: &AblationFlags) -> String {
    if flags.no_context || context.trim().is_empty() {
        "\n".to_string()
    } else {
        render(&templates.context, &[("signatures", context.trim_end())])
    }
}

pub fn build_completion_prompt(
    task: &CompletionTask,
    backend: &dyn Backend,
    flags: &AblationFlags,
    templates: &Templates,
) -> Result<String, BackendError> {
    let unit = if flags.no_compress { task.unit.clone() } else { backend.compress(&task.unit, &task.targets)? };
    Ok(render(
        &templates.complete,
        &[
            ("language", backend.language()),
            ("unit", unit.text.trim_end()),
            ("context", &context_section(templates, &task.context_text, flags)),
            ("targets", target_list(&task.targets).trim_end()),
        ],
    ))
}

/// Result of completing one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCompletion {
    pub unit: SourceUnit,
    pub report: Option<MergeReport>,
    /// False when both attempts produced nothing usable; `unit` is then
    /// the input unit.
    pub merged: bool,
    pub warnings: Vec<String>,
}

/// Code from a reply, checked to parse. `Err` carries the reason for the
/// retry prompt.
pub(crate) fn usable_code(response: &str, base: &SourceUnit, backend: &dyn Backend) -> Result<SourceUnit, String> {
    let as_unit =
        |text: &str| SourceUnit { path: base.path.clone(), class_id: base.class_id.clone(), text: text.to_string() };
    let parses = |t: &str| backend.parse_code(&as_unit(t)).is_ok();
    let code = extract_code_block(response, Some(backend.language()), Some(&parses)).map_err(|e| e.to_string())?;
    let unit = as_unit(&code);
    match backend.parse_code(&unit) {
        Ok(_) => Ok(unit),
        Err(ds) => Err(ds.iter().map(|d| format!("line {}: {}", d.line, d.message)).collect::<Vec<_>>().join("\n")),
    }
}

pub(crate) fn retry_prompt(prompt: &str, reason: &str, language: &str) -> String {
    format!(
        "{prompt}\n\nYour previous reply could not be used:\n{reason}\nReply again with the whole class in a single fenced ```{language} block.\n"
    )
}

/// One call, plus one re-ask when the reply holds no parseable code.
pub fn complete_class(
    task: &CompletionTask,
    session: &Session<'_>,
    backend: &dyn Backend,
    flags: &AblationFlags,
    templates: &Templates,
) -> Result<ClassCompletion, LlmError> {
    let mut warnings = Vec::new();
    let give_up =
        |warnings: Vec<String>| ClassCompletion { unit: task.unit.clone(), report: None, merged: false, warnings };
    let prompt = match build_completion_prompt(task, backend, flags, templates) {
        Ok(p) => p,
        Err(e) => return Ok(give_up(vec![format!("{}: cannot build prompt: {e}", task.class_id)])),
    };
    let first = session.ask(Stage::Complete, &prompt)?;
    let completed = match usable_code(&first, &task.unit, backend) {
        Ok(u) => u,
        Err(reason) => {
            warnings.push(format!("{}: unusable completion, asking again: {reason}", task.class_id));
            let second = session.ask(Stage::CompleteRetry, &retry_prompt(&prompt, &reason, backend.language()))?;
            match usable_code(&second, &task.unit, backend) {
                Ok(u) => u,
                Err(reason) => {
                    warnings.push(format!("{}: giving up after retry: {reason}", task.class_id));
                    log::warn!("{}", warnings.last().expect("pushed"));
                    return Ok(give_up(warnings));
                }
            }
        }
    };
    match backend.merge(&task.unit, &completed, &task.targets) {
        Ok((unit, report)) => {
            for (loc, why) in &report.rejected_edits {
                warnings.push(format!("{}: rejected edit at {loc}: {why}", task.class_id));
            }
            Ok(ClassCompletion { unit, report: Some(report), merged: true, warnings })
        }
        Err(e) => {
            warnings.push(format!("{}: merge failed: {e}", task.class_id));
            Ok(give_up(warnings))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompletionOutcome {
    pub units: Vec<SourceUnit>,
    pub reports: Vec<(String, MergeReport)>,
    pub warnings: Vec<String>,
}

/// Completes every target class in declaration order. Context comes from
/// the model, so earlier completions never change later prompts' context.
pub fn complete_all(
    m: &ModelPackage,
    units: &[SourceUnit],
    session: &Session<'_>,
    backend: &dyn Backend,
    flags: &AblationFlags,
    templates: &Templates,
    context_budget: usize,
) -> Result<CompletionOutcome, LlmError> {
    let mut out = CompletionOutcome { units: units.to_vec(), ..Default::default() };
    for class in select_targets(m) {
        let Some(idx) = out.units.iter().position(|u| u.class_id == class) else {
            out.warnings.push(format!("{class}: no unit in workspace"));
            continue;
        };
        let targets = backend.operation_keys(m, &class);
        if targets.is_empty() {
            continue;
        }
        let context_text = if flags.no_context {
            String::new()
        } else {
            build_context(m, &class, backend, context_budget).unwrap_or_default()
        };
        let task = CompletionTask { class_id: class.clone(), unit: out.units[idx].clone(), targets, context_text };
        let done = complete_class(&task, session, backend, flags, templates)?;
        out.warnings.extend(done.warnings);
        if let Some(r) = done.report {
            out.reports.push((class, r));
        }
        out.units[idx] = done.unit;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MiniOoBackend;
    use crate::decompose::passthrough_annotation;
    use crate::llm::ChatRequest;
    use crate::model::parse_model;

    fn airline() -> ModelPackage {
        let m = parse_model(
            "package air {
               class Airline { attr name: String; ref flights: Flight[*]; op countOpen(): Int; }
               class Flight { attr code: String; attr open: Bool; }
               class Lonely { attr x: Int; op twice(): Int; }
             }",
        )
        .unwrap();
        passthrough_annotation(&m, "Airline bookkeeping.").unwrap()
    }

    #[test]
    fn targets_in_declaration_order() {
        assert_eq!(select_targets(&airline()), vec!["Airline", "Lonely"]);
        let none = parse_model("package p { class A { attr x: Int; } }").unwrap();
        assert!(select_targets(&none).is_empty());
    }

    #[test]
    fn context_lists_related_signatures() {
        let b = MiniOoBackend::default();
        let m = airline();
        let ctx = build_context(&m, "Airline", &b, DEFAULT_CONTEXT_BUDGET).unwrap();
        assert!(ctx.starts_with("class Flight\n"));
        for sig in b.skeleton_signatures(&m, "Flight") {
            assert!(ctx.contains(&sig), "{sig}");
        }
        assert!(ctx.contains("isOpen()"));
        assert_eq!(build_context(&m, "Lonely", &b, DEFAULT_CONTEXT_BUDGET).unwrap(), "");
        let cut = build_context(&m, "Airline", &b, 10).unwrap();
        assert!(cut.contains(TRUNCATION_MARKER));
        assert!(matches!(build_context(&m, "Nope", &b, 10), Err(ModelError::UnknownClass(_))));
    }

    fn task(m: &ModelPackage, class: &str) -> CompletionTask {
        let b = MiniOoBackend::default();
        let units = b.generate_skeleton(m).unwrap();
        CompletionTask {
            class_id: class.into(),
            unit: units.into_iter().find(|u| u.class_id == class).unwrap(),
            targets: b.operation_keys(m, class),
            context_text: build_context(m, class, &b, DEFAULT_CONTEXT_BUDGET).unwrap(),
        }
    }

    #[test]
    fn prompt_variants() {
        let b = MiniOoBackend::default();
        let m = airline();
        let t = task(&m, "Airline");
        let tpl = Templates::default();
        let full = build_completion_prompt(&t, &b, &AblationFlags::default(), &tpl).unwrap();
        assert!(full.contains("Context (public methods of related classes)"));
        assert!(!full.contains("Returns the value of the"));
        assert!(full.contains("Airline bookkeeping."));
        let raw =
            build_completion_prompt(&t, &b, &AblationFlags { no_compress: true, ..Default::default() }, &tpl).unwrap();
        assert!(raw.contains(t.unit.text.trim_end()));
        assert!(raw.len() > full.len());
        let bare =
            build_completion_prompt(&t, &b, &AblationFlags { no_context: true, ..Default::default() }, &tpl).unwrap();
        assert!(!bare.contains("Context (public methods"));
        assert_eq!(full, build_completion_prompt(&t, &b, &AblationFlags::default(), &tpl).unwrap());
    }

    const LONELY_DONE: &str = "```minioo\nclass Lonely {\n  method twice(): Int {\n    return getX() * 2;\n  }\n}\n```";

    #[test]
    fn completes_and_merges() {
        let b = MiniOoBackend::default();
        let m = airline();
        let provider = |_: &ChatRequest| -> Result<String, LlmError> { Ok(LONELY_DONE.into()) };
        let s = Session::new(&provider, "m", 0.2, 100, 0);
        let t = task(&m, "Lonely");
        let done = complete_class(&t, &s, &b, &AblationFlags::default(), &Templates::default()).unwrap();
        assert!(done.merged);
        assert!(done.unit.text.contains("return getX() * 2;"));
        let tree = b.parse_code(&done.unit).unwrap();
        assert!(tree.classes[0].methods.iter().any(|mo| mo.key.name == "twice" && !mo.is_trap));
    }

    #[test]
    fn prose_twice_leaves_unit_unchanged() {
        let b = MiniOoBackend::default();
        let m = airline();
        let provider = |_: &ChatRequest| -> Result<String, LlmError> { Ok("I cannot help with that.".into()) };
        let s = Session::new(&provider, "m", 0.2, 100, 0);
        let t = task(&m, "Lonely");
        let done = complete_class(&t, &s, &b, &AblationFlags::default(), &Templates::default()).unwrap();
        assert!(!done.merged);
        assert_eq!(done.unit, t.unit);
        assert_eq!(s.count(Stage::Complete), 1);
        assert_eq!(s.count(Stage::CompleteRetry), 1);
        assert!(!done.warnings.is_empty());
    }

    #[test]
    fn one_failing_class_does_not_block_others() {
        let b = MiniOoBackend::default();
        let m = airline();
        let units = b.generate_skeleton(&m).unwrap();
        let provider = |r: &ChatRequest| -> Result<String, LlmError> {
            if r.user.contains("class Lonely") {
                Ok(LONELY_DONE.into())
            } else {
                Ok("no code here".into())
            }
        };
        let s = Session::new(&provider, "m", 0.2, 100, 0);
        let out =
            complete_all(&m, &units, &s, &b, &AblationFlags::default(), &Templates::default(), DEFAULT_CONTEXT_BUDGET)
                .unwrap();
        assert_eq!(s.count(Stage::Complete), 2);
        let lonely = out.units.iter().find(|u| u.class_id == "Lonely").unwrap();
        assert!(lonely.text.contains("getX() * 2"));
        let airline = out.units.iter().find(|u| u.class_id == "Airline").unwrap();
        assert_eq!(airline, units.iter().find(|u| u.class_id == "Airline").unwrap());
        assert_eq!(out.units.len(), units.len());
    }
}
