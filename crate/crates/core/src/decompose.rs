//! Requirement decomposition: one chat round turns a natural-language
//! requirement into a `MethodSpec` per model operation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmError, Session, Stage};
use crate::model::{emit_plantuml, operation_signature, validate_model, ModelError, ModelPackage, OpRef, Violation};
use crate::prompts::{render, Templates};

/// Structured description of one operation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    /// Never empty once attached.
    pub summary: String,
    pub algorithm: String,
    pub inputs: Vec<InputSpec>,
    pub output: String,
    pub preconditions: Vec<String>,
    pub postconditions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub name: String,
    pub description: String,
}

/// `specs` and `unmatched` partition the model's operations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecompositionResult {
    pub specs: BTreeMap<OpRef, MethodSpec>,
    pub unmatched: Vec<OpRef>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("model is invalid ({} violation(s))", .0.len())]
    InvalidModel(Vec<Violation>),
    #[error("requirement is empty")]
    EmptyRequirement,
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Spec used when no decomposition is available: the requirement as summary.
pub fn fallback_spec(requirement: &str) -> MethodSpec {
    MethodSpec { summary: requirement.trim().to_string(), ..Default::default() }
}

fn check_inputs(m: &ModelPackage, requirement: &str) -> Result<(), DecomposeError> {
    if requirement.trim().is_empty() {
        return Err(DecomposeError::EmptyRequirement);
    }
    let violations = validate_model(m);
    if !violations.is_empty() {
        return Err(DecomposeError::InvalidModel(violations));
    }
    Ok(())
}

pub fn build_decomposition_prompt(
    m: &ModelPackage,
    requirement: &str,
    templates: &Templates,
) -> Result<String, DecomposeError> {
    check_inputs(m, requirement)?;
    let plantuml = emit_plantuml(m)?;
    let operations: Vec<String> =
        m.operations().map(|(r, _, op)| format!("- {r}: {}", operation_signature(op))).collect();
    Ok(render(
        &templates.decompose,
        &[
            ("plantuml", plantuml.trim_end()),
            ("requirement", requirement.trim()),
            ("operations", &operations.join("\n")),
        ],
    ))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Summary,
    Algorithm,
    Input,
    Output,
    Pre,
    Post,
}

const SECTIONS: [Section; 6] =
    [Section::Summary, Section::Algorithm, Section::Input, Section::Output, Section::Pre, Section::Post];

impl Section {
    fn label(self) -> &'static str {
        match self {
            Section::Summary => "Summary",
            Section::Algorithm => "Algorithm",
            Section::Input => "Input",
            Section::Output => "Output",
            Section::Pre => "Preconditions",
            Section::Post => "Postconditions",
        }
    }

    fn from_label(label: &str) -> Option<Section> {
        let l = label.trim().trim_matches('*').trim().to_ascii_lowercase();
        Some(match l.as_str() {
            "summary" => Section::Summary,
            "algorithm" => Section::Algorithm,
            "input" | "inputs" => Section::Input,
            "output" | "outputs" => Section::Output,
            "precondition" | "preconditions" => Section::Pre,
            "postcondition" | "postconditions" => Section::Post,
            _ => return None,
        })
    }
}

/// `(section, rest of line)` when `line` opens a labeled section.
fn section_start(line: &str) -> Option<(Section, &str)> {
    let t = line.trim().trim_start_matches('#').trim_start();
    let (label, rest) = t.split_once(':')?;
    let s = Section::from_label(label)?;
    Some((s, rest.trim_start_matches('*').trim()))
}

fn list_item(line: &str) -> Option<&str> {
    let t = line.trim();
    if let Some(r) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        return Some(r.trim());
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(r) = t[digits..].strip_prefix(". ").or_else(|| t[digits..].strip_prefix(") ")) {
            return Some(r.trim());
        }
    }
    None
}

fn is_none_marker(s: &str) -> bool {
    matches!(s.trim().trim_end_matches('.').to_ascii_lowercase().as_str(), "" | "none" | "n/a" | "-")
}

fn list_of(lines: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in lines {
        match list_item(l) {
            Some(item) => out.push(item.to_string()),
            None if out.is_empty() => out.push(l.trim().to_string()),
            None => {
                let last = out.last_mut().expect("non-empty");
                last.push(' ');
                last.push_str(l.trim());
            }
        }
    }
    out.retain(|s| !is_none_marker(s));
    out
}

fn input_of(item: &str) -> InputSpec {
    let (head, desc) = match item.split_once(':') {
        Some((h, d)) => (h, d.trim()),
        None => item.split_once(char::is_whitespace).unwrap_or((item, "")),
    };
    let name: String = head.trim().trim_matches('`').chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    InputSpec { name, description: desc.to_string() }
}

fn parse_block(lines: &[&str], op: &OpRef, warnings: &mut Vec<String>) -> Option<MethodSpec> {
    let mut found: Vec<(Section, Vec<&str>)> = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            continue;
        }
        if let Some((s, rest)) = section_start(line) {
            found.push((s, if rest.is_empty() { Vec::new() } else { vec![rest] }));
        } else if let Some((_, body)) = found.last_mut() {
            if !line.trim().is_empty() {
                body.push(line);
            }
        }
    }
    let text_of = |s: Section| -> Option<String> {
        found
            .iter()
            .find(|(x, _)| *x == s)
            .map(|(_, body)| body.iter().map(|l| l.trim()).collect::<Vec<_>>().join("\n"))
    };
    let lines_of = |s: Section| found.iter().find(|(x, _)| *x == s).map(|(_, b)| b.as_slice());

    let summary = text_of(Section::Summary).unwrap_or_default();
    if summary.trim().is_empty() {
        warnings.push(format!("{op}: block has no summary; treated as missing"));
        return None;
    }
    for s in SECTIONS {
        if lines_of(s).is_none() {
            warnings.push(format!("{op}: section `{}` missing; left empty", s.label()));
        }
    }
    Some(MethodSpec {
        summary,
        algorithm: text_of(Section::Algorithm).unwrap_or_default(),
        inputs: lines_of(Section::Input)
            .map(list_of)
            .unwrap_or_default()
            .iter()
            .map(|i| input_of(i))
            .filter(|i| !i.name.is_empty())
            .collect(),
        output: text_of(Section::Output).unwrap_or_default(),
        preconditions: lines_of(Section::Pre).map(list_of).unwrap_or_default(),
        postconditions: lines_of(Section::Post).map(list_of).unwrap_or_default(),
    })
}

/// Operation named by a `### ...` header, resolved against the model.
fn header_op(line: &str, m: &ModelPackage) -> Result<OpRef, String> {
    let raw = line.trim().trim_start_matches('#').trim().trim_matches('`').trim();
    let head = match raw.find(')') {
        Some(close) => &raw[..=close],
        None => raw.split_whitespace().next().unwrap_or(""),
    };
    let parsed = OpRef::parse(head).ok_or_else(|| format!("unrecognized header `{raw}`"))?;
    let (ci, oi) = m.find_operation(&parsed).ok_or_else(|| format!("header names unknown operation `{parsed}`"))?;
    let c = &m.classes[ci];
    let op = &c.operations[oi];
    Ok(OpRef::new(&c.name, &op.name, op.params.len()))
}

/// Total: any text yields a result whose `specs` and `unmatched` partition
/// the model's operations.
pub fn parse_decomposition_response(resp: &str, m: &ModelPackage) -> DecompositionResult {
    let mut result = DecompositionResult::default();
    let lines: Vec<&str> = resp.lines().collect();
    let headers: Vec<usize> =
        lines.iter().enumerate().filter(|(_, l)| l.trim_start().starts_with("###")).map(|(i, _)| i).collect();
    for (n, &start) in headers.iter().enumerate() {
        let end = headers.get(n + 1).copied().unwrap_or(lines.len());
        let op = match header_op(lines[start], m) {
            Ok(op) => op,
            Err(w) => {
                result.warnings.push(w);
                continue;
            }
        };
        if result.specs.contains_key(&op) {
            result.warnings.push(format!("{op}: duplicate block ignored"));
            continue;
        }
        if let Some(spec) = parse_block(&lines[start + 1..end], &op, &mut result.warnings) {
            result.specs.insert(op, spec);
        }
    }
    if result.specs.is_empty() && m.operations().next().is_some() {
        result.warnings.push("response contains no recognizable operation blocks".into());
    }
    result.unmatched = m.operations().map(|(r, _, _)| r).filter(|r| !result.specs.contains_key(r)).collect();
    result
}

/// One chat call; every operation ends up annotated, unmatched ones with
/// the fallback spec.
pub fn decompose(
    m: &ModelPackage,
    requirement: &str,
    session: &Session<'_>,
    templates: &Templates,
) -> Result<(ModelPackage, DecompositionResult), DecomposeError> {
    let prompt = build_decomposition_prompt(m, requirement, templates)?;
    let response = session.ask(Stage::Decompose, &prompt)?;
    let mut result = parse_decomposition_response(&response, m);
    let mut out = m.clone();
    for (op, spec) in &result.specs {
        out = out.attach_spec(op, spec.clone())?;
    }
    for op in &result.unmatched {
        let w = format!("{op}: no method spec in response; using the requirement text");
        log::warn!("{w}");
        result.warnings.push(w);
        out = out.attach_spec(op, fallback_spec(requirement))?;
    }
    Ok((out, result))
}

/// Annotates every operation with the fallback spec, without any chat call.
pub fn passthrough_annotation(m: &ModelPackage, requirement: &str) -> Result<ModelPackage, DecomposeError> {
    if requirement.trim().is_empty() {
        return Err(DecomposeError::EmptyRequirement);
    }
    let mut out = m.clone();
    for c in &mut out.classes {
        for op in &mut c.operations {
            op.spec = Some(fallback_spec(requirement));
        }
    }
    Ok(out)
}

/// Renders a spec in the response format `parse_decomposition_response`
/// reads back.
pub fn render_spec_block(op: &OpRef, spec: &MethodSpec) -> String {
    let mut s = format!("### {op}\n```\nSummary: {}\n", spec.summary);
    s.push_str(&format!("Algorithm: {}\n", spec.algorithm));
    s.push_str("Input:\n");
    for i in &spec.inputs {
        s.push_str(&format!("- {}: {}\n", i.name, i.description));
    }
    s.push_str(&format!("Output: {}\nPreconditions:\n", spec.output));
    for p in &spec.preconditions {
        s.push_str(&format!("- {p}\n"));
    }
    s.push_str("Postconditions:\n");
    for p in &spec.postconditions {
        s.push_str(&format!("- {p}\n"));
    }
    s.push_str("```\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    const EMPLOYEE: &str = "package hr {
        class Employee {
          attr name: String;
          attr hireDate: Date;
          op computeLongServiceBonus(currentDate: Date): Float;
          op isSenior(currentDate: Date): Bool;
          op raise(pct: Float);
        }
      }";

    fn employee() -> ModelPackage {
        parse_model(EMPLOYEE).unwrap()
    }

    const FULL_BLOCK: &str = "### Employee.computeLongServiceBonus(1)
```
Summary: Computes the long-service bonus.
Algorithm: years = whole years between hire date and currentDate;
bonus = 100 per year above 5.
Input:
- currentDate: the evaluation date, on or after the hire date
Output: the bonus as a Float >= 0
Preconditions:
- hireDate is set
Postconditions:
- result >= 0
- no state changes
```
";

    #[test]
    fn prompt_order_and_content() {
        let p = build_decomposition_prompt(&employee(), "Pay bonuses.", &Templates::default()).unwrap();
        assert!(p.contains("+computeLongServiceBonus(currentDate : Date) : Float"));
        assert!(p.contains("### <Class>.<op>(<arity>)"));
        assert!(p.contains("- Employee.raise(1): raise(pct : Float) : Void"));
        let at = |s: &str| p.find(s).unwrap();
        assert!(at("@startuml") < at("Pay bonuses."));
        assert!(at("Pay bonuses.") < at("high cohesion and low coupling"));
        assert_eq!(p, build_decomposition_prompt(&employee(), "Pay bonuses.", &Templates::default()).unwrap());
    }

    #[test]
    fn prompt_errors() {
        let t = Templates::default();
        assert!(matches!(build_decomposition_prompt(&employee(), "  \n", &t), Err(DecomposeError::EmptyRequirement)));
        let bad = parse_model("package p { class A extends B {} class B extends A {} }").unwrap();
        assert!(matches!(build_decomposition_prompt(&bad, "x", &t), Err(DecomposeError::InvalidModel(_))));
    }

    #[test]
    fn parses_full_block() {
        let r = parse_decomposition_response(FULL_BLOCK, &employee());
        let op = OpRef::new("Employee", "computeLongServiceBonus", 1);
        assert_eq!(r.specs.len(), 1);
        let s = &r.specs[&op];
        assert_eq!(s.summary, "Computes the long-service bonus.");
        assert!(s.algorithm.contains("100 per year"));
        assert_eq!(
            s.inputs,
            vec![InputSpec {
                name: "currentDate".into(),
                description: "the evaluation date, on or after the hire date".into()
            }]
        );
        assert_eq!(s.postconditions.len(), 2);
        assert_eq!(r.unmatched.len(), 2);
        assert!(!r.unmatched.contains(&op));
    }

    #[test]
    fn labels_are_case_insensitive_and_optional() {
        let text = "### `Employee.raise(1)`\nSUMMARY: raises pay\n**inputs**:\n- pct (Float): percentage\n";
        let r = parse_decomposition_response(text, &employee());
        let s = &r.specs[&OpRef::new("Employee", "raise", 1)];
        assert_eq!(s.summary, "raises pay");
        assert_eq!(s.inputs[0].name, "pct");
        assert!(r.warnings.iter().any(|w| w.contains("Postconditions")));
    }

    #[test]
    fn unknown_operation_and_prose() {
        let r = parse_decomposition_response("### Employee.fly(0)\nSummary: no\n", &employee());
        assert!(r.specs.is_empty());
        assert_eq!(r.unmatched.len(), 3);
        assert!(r.warnings.iter().any(|w| w.contains("Employee.fly")));
        let r = parse_decomposition_response("Sure, here are some thoughts.", &employee());
        assert!(r.specs.is_empty() && r.unmatched.len() == 3 && !r.warnings.is_empty());
    }

    #[test]
    fn render_parse_roundtrip() {
        let op = OpRef::new("Employee", "computeLongServiceBonus", 1);
        let spec = parse_decomposition_response(FULL_BLOCK, &employee()).specs[&op].clone();
        let again = parse_decomposition_response(&render_spec_block(&op, &spec), &employee());
        assert_eq!(again.specs[&op], spec);
    }

    #[test]
    fn decompose_one_call_with_fallback() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let provider = |_: &crate::llm::ChatRequest| -> Result<String, LlmError> {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(FULL_BLOCK.to_string())
        };
        let s = Session::new(&provider, "m", 0.2, 100, 0);
        let (m, r) = decompose(&employee(), "Pay bonuses.", &s, &Templates::default()).unwrap();
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 1);
        assert_eq!(r.unmatched.len(), 2);
        for (_, _, op) in m.operations() {
            assert!(!op.spec.as_ref().unwrap().summary.is_empty());
        }
        assert_eq!(m.classes[0].operations[2].spec.as_ref().unwrap().summary, "Pay bonuses.");
    }

    #[test]
    fn decompose_propagates_provider_error() {
        let provider = |_: &crate::llm::ChatRequest| -> Result<String, LlmError> { Err(LlmError::Timeout) };
        let s = Session::new(&provider, "m", 0.2, 100, 0);
        assert!(matches!(
            decompose(&employee(), "x", &s, &Templates::default()),
            Err(DecomposeError::Provider(LlmError::Timeout))
        ));
    }

    #[test]
    fn passthrough() {
        let m = passthrough_annotation(&employee(), "Req.").unwrap();
        assert!(m.operations().all(|(_, _, op)| op.spec.as_ref().unwrap().summary == "Req."));
        let empty = parse_model("package p { class A { attr x: Int; } }").unwrap();
        assert_eq!(passthrough_annotation(&empty, "Req.").unwrap(), empty);
        assert!(matches!(passthrough_annotation(&empty, ""), Err(DecomposeError::EmptyRequirement)));
    }
}
