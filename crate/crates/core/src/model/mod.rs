//! Class model: types, the `.cmdl` text format, validation, PlantUML
//! emission and operation annotations.

mod parse;
mod plantuml;
mod serialize;
mod types;
mod validate;

use std::collections::HashSet;

use thiserror::Error;

pub use parse::parse_model;
pub use plantuml::{emit_plantuml, operation_signature};
pub use serialize::serialize_model;
pub use types::*;
pub use validate::{tally, validate_model, Violation, ViolationKind};

use crate::decompose::MethodSpec;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unresolved type `{0}`")]
    UnresolvedType(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("model is invalid ({} violation(s))", .0.len())]
    InvalidModel(Vec<Violation>),
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

impl ModelPackage {
    /// Returns a copy with the given operation's annotation set (replacing
    /// any earlier one). Input entries naming parameters the operation does
    /// not declare are dropped with a warning.
    pub fn attach_spec(&self, op: &OpRef, mut spec: MethodSpec) -> Result<ModelPackage, ModelError> {
        let (ci, oi) = self.find_operation(op).ok_or_else(|| ModelError::UnknownOperation(op.to_string()))?;
        let mut out = self.clone();
        let target = &mut out.classes[ci].operations[oi];
        let declared: HashSet<&str> = target.params.iter().map(|p| p.name.as_str()).collect();
        spec.inputs.retain(|input| {
            let keep = declared.contains(input.name.as_str());
            if !keep {
                log::warn!("{op}: dropping description of undeclared parameter `{}`", input.name);
            }
            keep
        });
        target.spec = Some(spec);
        Ok(out)
    }

    /// Classes one hop away from `cls`: its superclass chain, then its
    /// reference targets, then classes named in its operation signatures.
    /// Never contains `cls`; no duplicates.
    pub fn related_classes(&self, cls: &str) -> Result<Vec<&ClassDef>, ModelError> {
        let class = self.class(cls).ok_or_else(|| ModelError::UnknownClass(cls.to_string()))?;
        let mut names: Vec<&str> = Vec::new();
        fn push<'m>(n: &'m str, cls: &str, names: &mut Vec<&'m str>) {
            if n != cls && !names.contains(&n) {
                names.push(n);
            }
        }
        let chain: Vec<&str> = self.ancestors(cls).iter().map(|c| c.name.as_str()).collect();
        for n in chain {
            push(n, cls, &mut names);
        }
        for r in &class.references {
            push(&r.target, cls, &mut names);
        }
        for op in &class.operations {
            for ty in op.params.iter().map(|p| &p.ty).chain(std::iter::once(&op.return_type)) {
                if let Some(n) = ty.class_name() {
                    push(n, cls, &mut names);
                }
            }
        }
        Ok(names.into_iter().filter_map(|n| self.class(n)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::InputSpec;

    const EMPLOYEE: &str = "package hr { class Employee { attr hireDate: Date; op computeLongServiceBonus(currentDate: Date): Float; op other(); } }";

    fn spec(summary: &str) -> MethodSpec {
        MethodSpec { summary: summary.into(), ..Default::default() }
    }

    #[test]
    fn attach_changes_only_that_operation() {
        let m = parse_model(EMPLOYEE).unwrap();
        let op = OpRef::parse("Employee.computeLongServiceBonus").unwrap();
        let annotated = m.attach_spec(&op, spec("bonus")).unwrap();
        let mut expected = m.clone();
        expected.classes[0].operations[0].spec = Some(spec("bonus"));
        assert_eq!(annotated, expected);

        let twice = annotated.attach_spec(&op, spec("second")).unwrap();
        assert_eq!(twice.classes[0].operations[0].spec.as_ref().unwrap().summary, "second");
    }

    #[test]
    fn attach_unknown_operation() {
        let m = parse_model(EMPLOYEE).unwrap();
        let err = m.attach_spec(&OpRef::parse("Employee.noSuchOp").unwrap(), spec("x"));
        assert_eq!(err, Err(ModelError::UnknownOperation("Employee.noSuchOp".into())));
        let err = m.attach_spec(&OpRef::parse("Employee.other(2)").unwrap(), spec("x"));
        assert!(matches!(err, Err(ModelError::UnknownOperation(_))));
    }

    #[test]
    fn attach_drops_undeclared_inputs() {
        let m = parse_model(EMPLOYEE).unwrap();
        let mut s = spec("bonus");
        s.inputs = vec![
            InputSpec { name: "currentDate".into(), description: "today".into() },
            InputSpec { name: "ghost".into(), description: "?".into() },
        ];
        let out = m.attach_spec(&OpRef::new("Employee", "computeLongServiceBonus", 1), s).unwrap();
        let inputs = &out.classes[0].operations[0].spec.as_ref().unwrap().inputs;
        assert_eq!(inputs.len(), 1);
        assert_eq!(inputs[0].name, "currentDate");
    }

    #[test]
    fn related_classes_rules() {
        let m = parse_model(
            "package a {
               class Isolated { attr x: Int; op f(y: Int): Int; }
               class Airline { ref flights: Flight[*]; op publishFlight(f: Flight, now: Date): Bool; }
               class Flight {}
               class A {} class B extends A {} class C extends B { op g(c: C): List<C>; }
             }",
        )
        .unwrap();
        assert!(m.related_classes("Isolated").unwrap().is_empty());
        let names = |c: &str| -> Vec<String> { m.related_classes(c).unwrap().iter().map(|c| c.name.clone()).collect() };
        assert_eq!(names("Airline"), vec!["Flight"]);
        assert_eq!(names("C"), vec!["B", "A"]);
        assert!(matches!(m.related_classes("Nope"), Err(ModelError::UnknownClass(_))));
    }

    #[test]
    fn op_ref_parsing() {
        assert_eq!(OpRef::parse("A.f(2)"), Some(OpRef::new("A", "f", 2)));
        assert_eq!(OpRef::parse("A.f").unwrap().arity, None);
        assert_eq!(OpRef::parse("A.f(x)"), None);
        assert_eq!(OpRef::parse("f"), None);
        assert_eq!(OpRef::new("A", "f", 0).to_string(), "A.f(0)");
    }
}
