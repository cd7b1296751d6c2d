use std::fmt::Write;

use super::types::*;
use crate::dates;
use crate::decompose::MethodSpec;

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

fn literal(lit: &Literal) -> String {
    match lit {
        Literal::Int(n) => n.to_string(),
        Literal::Float(x) => format!("{x:?}"),
        Literal::Bool(b) => b.to_string(),
        Literal::Str(s) => quote(s),
        Literal::Date(d) => quote(&dates::format_iso(*d)),
        Literal::EnumLiteral(l) => l.clone(),
    }
}

fn spec_block(out: &mut String, spec: &MethodSpec) {
    out.push_str(" spec {\n");
    let _ = writeln!(out, "      summary {};", quote(&spec.summary));
    if !spec.algorithm.is_empty() {
        let _ = writeln!(out, "      algorithm {};", quote(&spec.algorithm));
    }
    for input in &spec.inputs {
        let _ = writeln!(out, "      input {} {};", input.name, quote(&input.description));
    }
    if !spec.output.is_empty() {
        let _ = writeln!(out, "      output {};", quote(&spec.output));
    }
    for p in &spec.preconditions {
        let _ = writeln!(out, "      pre {};", quote(p));
    }
    for p in &spec.postconditions {
        let _ = writeln!(out, "      post {};", quote(p));
    }
    out.push_str("    }\n");
}

/// Writes a model back to the `.cmdl` text format.
pub fn serialize_model(m: &ModelPackage) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "package {} {{", m.name);
    for e in &m.enums {
        let _ = writeln!(out, "  enum {} {{ {} }}", e.name, e.literals.join(", "));
    }
    for c in &m.classes {
        out.push_str("  ");
        if c.is_abstract {
            out.push_str("abstract ");
        }
        let _ = write!(out, "class {}", c.name);
        if let Some(s) = &c.super_class {
            let _ = write!(out, " extends {s}");
        }
        out.push_str(" {\n");
        for a in &c.attributes {
            let _ = write!(out, "    attr {}: {}", a.name, a.ty);
            if a.is_many {
                out.push_str("[*]");
            }
            if let Some(d) = &a.default_value {
                let _ = write!(out, " = {}", literal(d));
            }
            out.push_str(";\n");
        }
        for r in &c.references {
            out.push_str("    ref ");
            if r.is_containment {
                out.push_str("contains ");
            }
            let _ = write!(out, "{}: {}", r.name, r.target);
            if r.is_many {
                out.push_str("[*]");
            }
            if let Some(o) = &r.opposite {
                let _ = write!(out, " opposite {o}");
            }
            out.push_str(";\n");
        }
        for op in &c.operations {
            let params: Vec<String> = op.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
            let _ = write!(out, "    op {}({})", op.name, params.join(", "));
            if op.return_type != TypeRef::Void {
                let _ = write!(out, ": {}", op.return_type);
            }
            match &op.spec {
                Some(spec) => spec_block(&mut out, spec),
                None => out.push_str(";\n"),
            }
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}
