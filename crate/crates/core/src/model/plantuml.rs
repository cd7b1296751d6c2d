use std::fmt::Write;

use super::types::*;
use super::{validate_model, ModelError};

/// Renders the model as a PlantUML class diagram.
///
/// Layout: enum blocks, then one block per class (attributes as
/// `+name : Type`, operations as `+name(p : T) : R`), then inheritance
/// edges (`A --|> B`), then one edge per reference (`-->`, or `*-->` for
/// containment) labelled with its multiplicity.
pub fn emit_plantuml(m: &ModelPackage) -> Result<String, ModelError> {
    let violations = validate_model(m);
    if !violations.is_empty() {
        return Err(ModelError::InvalidModel(violations));
    }
    let mut out = String::from("@startuml\n");
    for e in &m.enums {
        let _ = writeln!(out, "enum {} {{", e.name);
        for l in &e.literals {
            let _ = writeln!(out, "  {l}");
        }
        out.push_str("}\n");
    }
    for c in &m.classes {
        let kw = if c.is_abstract { "abstract class" } else { "class" };
        let _ = writeln!(out, "{kw} {} {{", c.name);
        for a in &c.attributes {
            let many = if a.is_many { "[*]" } else { "" };
            let _ = writeln!(out, "  +{} : {}{many}", a.name, a.ty);
        }
        for op in &c.operations {
            let _ = writeln!(out, "  +{}", operation_signature(op));
        }
        out.push_str("}\n");
    }
    for c in &m.classes {
        if let Some(s) = &c.super_class {
            let _ = writeln!(out, "{} --|> {s}", c.name);
        }
    }
    for c in &m.classes {
        for r in &c.references {
            let arrow = if r.is_containment { "*-->" } else { "-->" };
            let mult = if r.is_many { "0..*" } else { "0..1" };
            let _ = writeln!(out, "{} {arrow} \"{mult}\" {} : {}", c.name, r.target, r.name);
        }
    }
    out.push_str("@enduml\n");
    Ok(out)
}

/// `name(p : T, ...) : R`, as shown in diagrams and prompt headers.
pub fn operation_signature(op: &OperationDef) -> String {
    let params: Vec<String> = op.params.iter().map(|p| format!("{} : {}", p.name, p.ty)).collect();
    format!("{}({}) : {}", op.name, params.join(", "), op.return_type)
}
