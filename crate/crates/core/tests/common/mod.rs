//! Shared oracles for the property suites and the acceptance runner.
#![allow(dead_code)]

pub mod models;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use hybridgen::backend::{Backend, MethodKey, MiniOoBackend, SourceUnit};
use hybridgen::decompose::decompose;
use hybridgen::eval::{load_bench, Problem};
use hybridgen::llm::{ChatRequest, LlmError, Session};
use hybridgen::minioo::ast::Program;
use hybridgen::minioo::parse_unit;
use hybridgen::model::{parse_model, serialize_model, validate_model, ModelPackage, TypeRef, ViolationKind};
use hybridgen::prompts::Templates;

pub struct Fixture {
    pub problem: Problem,
    pub annotated: ModelPackage,
    pub skeleton: Vec<SourceUnit>,
}

pub fn repo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn bench_dir() -> PathBuf {
    repo_dir().join("bench")
}

/// Every shipped problem, annotated from its reference decomposition.
pub fn fixtures() -> &'static [Fixture] {
    static F: OnceLock<Vec<Fixture>> = OnceLock::new();
    F.get_or_init(|| {
        let backend = MiniOoBackend::default();
        load_bench(&bench_dir())
            .unwrap()
            .into_iter()
            .map(|problem| {
                let answer = std::fs::read_to_string(problem.dir.join("solution/decomposition.md")).unwrap();
                let provider = move |_: &ChatRequest| -> Result<String, LlmError> { Ok(answer.clone()) };
                let session = Session::new(&provider, "replay", 0.8, 4096, 0);
                let (annotated, result) =
                    decompose(&problem.model, &problem.requirement, &session, &Templates::default()).unwrap();
                assert!(result.unmatched.is_empty(), "{}: {:?}", problem.id, result.unmatched);
                let skeleton = backend.generate_skeleton(&annotated).unwrap();
                Fixture { problem, annotated, skeleton }
            })
            .collect()
    })
}

pub fn parse(u: &SourceUnit) -> Program {
    parse_unit(&u.path, &u.text).unwrap()
}

fn cap(name: &str) -> String {
    format!("{}{}", name[..1].to_uppercase(), &name[1..])
}

/// Zero diagnostics, one trap per operation, `isX` for single Bool attributes.
pub fn check_skeleton(f: &Fixture) -> Result<(), String> {
    let b = MiniOoBackend::default();
    let id = &f.problem.id;
    let r = b.compile_check(&f.skeleton);
    if !r.ok {
        return Err(format!("{id}: {:?}", r.diagnostics));
    }
    for c in &f.annotated.classes {
        let unit = f.skeleton.iter().find(|u| u.class_id == c.name).ok_or(format!("{id}: no unit for {}", c.name))?;
        let traps = unit.text.matches("raise Unsupported(").count();
        if traps != c.operations.len() {
            return Err(format!("{id}.{}: {traps} traps for {} operations", c.name, c.operations.len()));
        }
        let p = parse(unit);
        let decl = p.class(&c.name).ok_or(format!("{id}: class {} missing", c.name))?;
        for op in &c.operations {
            if !decl.method(&op.name, op.params.len()).is_some_and(|m| m.body.is_trap()) {
                return Err(format!("{id}.{}.{}: not a trap", c.name, op.name));
            }
        }
        for a in c.attributes.iter().filter(|a| a.ty == TypeRef::Bool && !a.is_many) {
            let n = cap(&a.name);
            if decl.method(&format!("is{n}"), 0).is_none() || decl.method(&format!("get{n}"), 0).is_some() {
                return Err(format!("{id}.{}.{}: accessor is not is{n}", c.name, a.name));
            }
        }
    }
    Ok(())
}

fn signatures(b: &MiniOoBackend, u: &SourceUnit) -> Vec<String> {
    let tree = b.parse_code(u).unwrap();
    let mut out: Vec<String> =
        tree.classes.iter().flat_map(|c| c.methods.iter().map(|m| m.signature.clone())).collect();
    out.sort();
    out
}

/// Signature multiset kept, idempotent, and at least 30% fewer characters
/// over the whole skeleton. Returns (raw, compressed) character counts.
pub fn check_compression(f: &Fixture) -> Result<(usize, usize), String> {
    let b = MiniOoBackend::default();
    let (mut raw, mut packed) = (0usize, 0usize);
    for u in &f.skeleton {
        let keep = b.operation_keys(&f.annotated, &u.class_id);
        let c = b.compress(u, &keep).map_err(|e| e.to_string())?;
        if signatures(&b, u) != signatures(&b, &c) {
            return Err(format!("{}: signatures changed", u.path));
        }
        if b.compress(&c, &keep).map_err(|e| e.to_string())? != c {
            return Err(format!("{}: not idempotent", u.path));
        }
        raw += u.text.chars().count();
        packed += c.text.chars().count();
    }
    if packed * 10 > raw * 7 {
        return Err(format!("{}: {packed} of {raw} characters", f.problem.id));
    }
    Ok((raw, packed))
}

/// (fixture, unit) pairs whose unit has completion targets.
pub fn merge_candidates() -> &'static [(usize, usize)] {
    static C: OnceLock<Vec<(usize, usize)>> = OnceLock::new();
    C.get_or_init(|| {
        let b = MiniOoBackend::default();
        let mut out = Vec::new();
        for (fi, f) in fixtures().iter().enumerate() {
            for (ui, u) in f.skeleton.iter().enumerate() {
                if !b.operation_keys(&f.annotated, &u.class_id).is_empty() {
                    out.push((fi, ui));
                }
            }
        }
        out
    })
}

/// Inputs of one merge fuzz case.
pub fn merge_input() -> impl Strategy<Value = (prop::sample::Index, Vec<bool>, bool)> {
    (any::<prop::sample::Index>(), prop::collection::vec(any::<bool>(), 64), any::<bool>())
}

const EDIT: &str = "{\n    raise Failure(\"edited\");\n  }";

/// Rewrites the bodies picked by `edits` (and maybe adds a helper), merges,
/// and checks that only target methods changed and every other edit was
/// reported.
pub fn merge_case((pick, edits, helper): (prop::sample::Index, Vec<bool>, bool)) -> Result<(), TestCaseError> {
    let b = MiniOoBackend::default();
    let cands = merge_candidates();
    let (fi, ui) = cands[pick.index(cands.len())];
    let f = &fixtures()[fi];
    let base = &f.skeleton[ui];
    let targets = b.operation_keys(&f.annotated, &base.class_id);
    let bp = parse(base);
    let class = bp.class(&base.class_id).unwrap();

    // Back to front so earlier spans stay valid.
    let methods: Vec<_> = class.methods().collect();
    let mut edited: Vec<MethodKey> = Vec::new();
    let mut text = base.text.clone();
    for (i, m) in methods.iter().enumerate().rev() {
        if edits[i % edits.len()] {
            text.replace_range(m.body.span.start..m.body.span.end, EDIT);
            edited.push(MethodKey::new(&class.name, &m.name, m.params.len()));
        }
    }
    if helper {
        let close = text.rfind('}').unwrap();
        text.insert_str(close, "\n  method fuzzHelper(): Int {\n    return 1;\n  }\n");
    }
    let done = SourceUnit { text, ..base.clone() };
    let (merged, report) = b.merge(base, &done, &targets).map_err(|e| TestCaseError::fail(e.to_string()))?;

    let mp = parse(&merged);
    let mc = mp.class(&class.name).unwrap();
    let rejected: BTreeSet<&str> = report.rejected_edits.iter().map(|(loc, _)| loc.as_str()).collect();
    for m in &methods {
        let key = MethodKey::new(&class.name, &m.name, m.params.len());
        let after = mc.method(&m.name, m.params.len()).unwrap();
        if targets.contains(&key) {
            if edited.contains(&key) {
                prop_assert!(report.replaced_methods.contains(&key));
                prop_assert_ne!(&after.body, &m.body);
            }
        } else {
            prop_assert_eq!(&after.body, &m.body, "{} changed", key);
            if edited.contains(&key) {
                let loc = key.to_string();
                prop_assert!(rejected.contains(loc.as_str()), "{} not reported", key);
            }
        }
    }
    prop_assert_eq!(mc.method("fuzzHelper", 0).is_some(), helper);
    prop_assert_eq!(report.rejected_edits.len(), edited.iter().filter(|k| !targets.contains(k)).count());
    Ok(())
}

/// Valid, and parse∘serialize is the identity.
pub fn round_trip(m: &ModelPackage) -> Result<(), TestCaseError> {
    let v = validate_model(m);
    prop_assert!(v.is_empty(), "{:?}", v);
    let text = serialize_model(m);
    let back = parse_model(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&back, m);
    prop_assert_eq!(serialize_model(&back), text);
    Ok(())
}

/// Violations of one invalid fixture under `fixtures/invalid`.
pub fn invalid_fixture(name: &str) -> Vec<ViolationKind> {
    let path = repo_dir().join("fixtures/invalid").join(name);
    let m = parse_model(&std::fs::read_to_string(path).unwrap()).unwrap();
    validate_model(&m).into_iter().map(|v| v.kind).collect()
}
