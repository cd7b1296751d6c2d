use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use super::*;
use crate::dates;
use crate::decompose::MethodSpec;
use crate::minioo::ast::{Block, ClassDecl, Decl, EnumDecl, Member, MethodDecl, Program};
use crate::minioo::printer::{
    block_to_string, method_header, print_class, print_enum, print_method, print_program, quote_str,
};
use crate::minioo::{self, check_units, parser, CheckUnit, DEFAULT_STEP_BUDGET};
use crate::model::{ClassDef, Literal, ModelPackage, OperationDef, TypeRef};

const BUILTIN_TYPES: &[&str] = &["Int", "Float", "Bool", "String", "Date", "Void", "List", "Math", "Unsupported"];

/// Reference backend targeting MiniOO.
#[derive(Clone, Debug)]
pub struct MiniOoBackend {
    pub step_budget: u64,
}

impl Default for MiniOoBackend {
    fn default() -> Self {
        MiniOoBackend { step_budget: DEFAULT_STEP_BUDGET }
    }
}

pub(crate) fn unit_path(name: &str) -> String {
    format!("src/{name}.mo")
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

/// `hireDate` → `Hire Date`, as EMF renders feature names in docs.
fn display_name(s: &str) -> String {
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i == 0 {
            out.extend(c.to_uppercase());
        } else {
            if c.is_uppercase() {
                out.push(' ');
            }
            out.push(c);
        }
    }
    out
}

fn mo_type(t: &TypeRef) -> String {
    t.to_string()
}

fn literal_text(l: &Literal, ty: &TypeRef) -> String {
    match l {
        Literal::Int(n) => n.to_string(),
        Literal::Float(x) => format!("{x:?}"),
        Literal::Bool(b) => b.to_string(),
        Literal::Str(s) => quote_str(s),
        Literal::Date(d) => {
            let (y, m, dd) = dates::civil_from_days(*d);
            format!("Date.of({y}, {m}, {dd})")
        }
        Literal::EnumLiteral(lit) => format!("{ty}.{lit}"),
    }
}

/// Doc comment text with `*/` neutralized, one ` * ` prefix per line.
fn doc_lines(out: &mut String, text: &str) {
    for line in text.replace("*/", "*\\/").lines() {
        if line.trim().is_empty() {
            out.push_str("   *\n");
        } else {
            let _ = writeln!(out, "   * {}", line.trim_end());
        }
    }
}

fn render_spec_doc(spec: &MethodSpec) -> String {
    let mut out = String::from("  /**\n   * <!-- begin-user-doc -->\n");
    doc_lines(&mut out, &format!("Summary: {}", spec.summary));
    doc_lines(&mut out, &format!("Algorithm: {}", spec.algorithm));
    out.push_str("   * Input:\n");
    for i in &spec.inputs {
        doc_lines(&mut out, &format!("  - {}: {}", i.name, i.description));
    }
    doc_lines(&mut out, &format!("Output: {}", spec.output));
    out.push_str("   * Preconditions:\n");
    for p in &spec.preconditions {
        doc_lines(&mut out, &format!("  - {p}"));
    }
    out.push_str("   * Postconditions:\n");
    for p in &spec.postconditions {
        doc_lines(&mut out, &format!("  - {p}"));
    }
    out.push_str("   * <!-- end-user-doc -->\n   * @generated NOT\n   */\n");
    out
}

/// One generated accessor or operation method.
struct GenMethod {
    name: String,
    arity: usize,
    is_op: bool,
}

fn getter_name(name: &str, ty: &TypeRef, is_many: bool) -> String {
    if *ty == TypeRef::Bool && !is_many {
        format!("is{}", capitalize(name))
    } else {
        format!("get{}", capitalize(name))
    }
}

/// Names of all methods the skeleton gives `c` itself (not inherited).
fn generated_methods(c: &ClassDef) -> Vec<GenMethod> {
    let mut out = Vec::new();
    let mut feature = |name: &str, ty: &TypeRef, many: bool| {
        out.push(GenMethod { name: getter_name(name, ty, many), arity: 0, is_op: false });
        if !many {
            out.push(GenMethod { name: format!("set{}", capitalize(name)), arity: 1, is_op: false });
        }
    };
    for a in &c.attributes {
        feature(&a.name, &a.ty, a.is_many);
    }
    for r in &c.references {
        feature(&r.name, &TypeRef::Class(r.target.clone()), r.is_many);
    }
    out.push(GenMethod { name: "toString".into(), arity: 0, is_op: false });
    for op in &c.operations {
        out.push(GenMethod { name: op.name.clone(), arity: op.params.len(), is_op: true });
    }
    out
}

fn factory_name(model: &ModelPackage) -> String {
    format!("{}Factory", capitalize(&model.name))
}

fn check_names(model: &ModelPackage) -> Result<(), BackendError> {
    let factory = factory_name(model);
    let type_names = model.classes.iter().map(|c| &c.name).chain(model.enums.iter().map(|e| &e.name));
    for n in type_names {
        if parser::is_reserved(n) || BUILTIN_TYPES.contains(&n.as_str()) {
            return Err(BackendError::NameClash(format!("type name `{n}` is reserved")));
        }
        if *n == factory {
            return Err(BackendError::NameClash(format!("type `{n}` collides with the factory")));
        }
    }
    for e in &model.enums {
        if let Some(l) = e.literals.iter().find(|l| parser::is_reserved(l)) {
            return Err(BackendError::NameClash(format!("literal `{}.{l}` is reserved", e.name)));
        }
    }
    for c in &model.classes {
        let features = c.attributes.iter().map(|a| &a.name).chain(c.references.iter().map(|r| &r.name));
        let params = c.operations.iter().flat_map(|o| o.params.iter().map(|p| &p.name));
        for n in features.chain(params).chain(c.operations.iter().map(|o| &o.name)) {
            if parser::is_reserved(n) {
                return Err(BackendError::NameClash(format!("`{}.{n}` is a reserved word", c.name)));
            }
        }
        let own = generated_methods(c);
        let mut seen: HashMap<&str, &GenMethod> = HashMap::new();
        for g in &own {
            if seen.insert(g.name.as_str(), g).is_some() {
                return Err(BackendError::NameClash(format!("method `{}` is generated twice in `{}`", g.name, c.name)));
            }
        }
        for anc in model.ancestors(&c.name) {
            for inherited in generated_methods(anc) {
                if let Some(g) = seen.get(inherited.name.as_str()) {
                    let compatible =
                        g.arity == inherited.arity && g.is_op == inherited.is_op && (g.is_op || g.name == "toString");
                    if !compatible {
                        return Err(BackendError::NameClash(format!(
                            "method `{}` in `{}` collides with one inherited from `{}`",
                            g.name, c.name, anc.name
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn feature_getter(out: &mut String, class: &str, name: &str, ty: &TypeRef, many: bool, kind: &str) {
    let label = display_name(name);
    let getter = getter_name(name, ty, many);
    let rendered = if many { format!("List<{}>", mo_type(ty)) } else { mo_type(ty) };
    let _ = writeln!(out, "  /**");
    let _ = writeln!(out, "   * Returns the value of the '<em><b>{label}</b></em>' {kind}.");
    if many {
        let _ = writeln!(out, "   * The list contents are of type {{@link {ty}}}.");
    }
    let _ = writeln!(out, "   * <!-- begin-user-doc -->");
    let _ = writeln!(out, "   * <!-- end-user-doc -->");
    let _ = writeln!(out, "   * @return the value of the '<em>{label}</em>' {kind}.");
    if !many {
        let _ = writeln!(out, "   * @see #set{}({})", capitalize(name), rendered);
    }
    let _ = writeln!(out, "   * @see {class}#{getter}()");
    let _ = writeln!(out, "   * @generated");
    let _ = writeln!(out, "   */");
    let _ = writeln!(out, "  method {getter}(): {rendered} {{");
    let _ = writeln!(out, "    return {name};");
    let _ = writeln!(out, "  }}");
}

fn feature_setter(out: &mut String, class: &str, name: &str, ty: &TypeRef, kind: &str) {
    let label = display_name(name);
    let cap = capitalize(name);
    let getter = getter_name(name, ty, false);
    let _ = writeln!(out, "  /**");
    let _ = writeln!(out, "   * Sets the value of the '{{@link {class}#{getter} <em>{label}</em>}}' {kind}.");
    let _ = writeln!(out, "   * <!-- begin-user-doc -->");
    let _ = writeln!(out, "   * <!-- end-user-doc -->");
    let _ = writeln!(out, "   * @param new{cap} the new value of the '<em>{label}</em>' {kind}.");
    let _ = writeln!(out, "   * @see #{getter}()");
    let _ = writeln!(out, "   * @generated");
    let _ = writeln!(out, "   */");
    let _ = writeln!(out, "  method set{cap}(new{cap}: {}): Void {{", mo_type(ty));
    let _ = writeln!(out, "    {name} = new{cap};");
    let _ = writeln!(out, "  }}");
}

fn class_text(model: &ModelPackage, c: &ClassDef) -> Result<String, BackendError> {
    let mut out = String::new();
    let _ = writeln!(out, "// Generated from class `{}` of model package `{}`.", c.name, model.name);
    let _ = writeln!(out, "// Methods marked `@generated NOT` hold hand-written or completed code.");
    if c.is_abstract {
        out.push_str("abstract ");
    }
    let _ = write!(out, "class {}", c.name);
    if let Some(s) = &c.super_class {
        let _ = write!(out, " extends {s}");
    }
    out.push_str(" {\n");

    for a in &c.attributes {
        let _ = writeln!(out, "  // Cached value of the '{}' attribute.", a.name);
        if a.is_many {
            let _ = writeln!(out, "  field {}: List<{}> = [];", a.name, mo_type(&a.ty));
        } else {
            let _ = write!(out, "  field {}: {}", a.name, mo_type(&a.ty));
            if let Some(d) = &a.default_value {
                let _ = write!(out, " = {}", literal_text(d, &a.ty));
            }
            out.push_str(";\n");
        }
    }
    for r in &c.references {
        let kind = if r.is_containment { "containment reference" } else { "reference" };
        let _ = writeln!(out, "  // Cached value of the '{}' {kind}.", r.name);
        if r.is_many {
            let _ = writeln!(out, "  field {}: List<{}> = [];", r.name, r.target);
        } else {
            let _ = writeln!(out, "  field {}: {};", r.name, r.target);
        }
    }

    let mut first = c.attributes.is_empty() && c.references.is_empty();
    let mut sep = |out: &mut String| {
        if !first {
            out.push('\n');
        }
        first = false;
    };
    for a in &c.attributes {
        let kind = if a.is_many { "attribute list" } else { "attribute" };
        sep(&mut out);
        feature_getter(&mut out, &c.name, &a.name, &a.ty, a.is_many, kind);
        if !a.is_many {
            sep(&mut out);
            feature_setter(&mut out, &c.name, &a.name, &a.ty, kind);
        }
    }
    for r in &c.references {
        let ty = TypeRef::Class(r.target.clone());
        let kind = if r.is_containment { "containment reference" } else { "reference" };
        let kind = if r.is_many { format!("{kind} list") } else { kind.to_string() };
        sep(&mut out);
        feature_getter(&mut out, &c.name, &r.name, &ty, r.is_many, &kind);
        if !r.is_many {
            sep(&mut out);
            feature_setter(&mut out, &c.name, &r.name, &ty, &kind);
        }
    }

    sep(&mut out);
    out.push_str("  /**\n   * <!-- begin-user-doc -->\n   * <!-- end-user-doc -->\n   * @generated\n   */\n");
    out.push_str("  method toString(): String {\n");
    let parts: Vec<String> = c.attributes.iter().map(|a| format!("\"{0}: \" + {0}", a.name)).collect();
    if parts.is_empty() {
        let _ = writeln!(out, "    return \"{}\";", c.name);
    } else {
        let _ = writeln!(out, "    return \"{} (\" + {} + \")\";", c.name, parts.join(" + \", \" + "));
    }
    out.push_str("  }\n");

    for op in &c.operations {
        sep(&mut out);
        let spec =
            op.spec.as_ref().ok_or_else(|| BackendError::UnannotatedOperation(format!("{}.{}", c.name, op.name)))?;
        out.push_str(&render_spec_doc(spec));
        let _ = writeln!(out, "  {} {{", op_header(op));
        out.push_str("    raise Unsupported(\"not implemented\");\n  }\n");
    }
    out.push_str("}\n");
    Ok(out)
}

fn op_header(op: &OperationDef) -> String {
    let params: Vec<String> = op.params.iter().map(|p| format!("{}: {}", p.name, mo_type(&p.ty))).collect();
    format!("method {}({}): {}", op.name, params.join(", "), mo_type(&op.return_type))
}

fn factory_text(model: &ModelPackage) -> String {
    let name = factory_name(model);
    let mut out = String::new();
    let _ = writeln!(out, "// Generated factory for model package `{}`.", model.name);
    let _ = writeln!(out, "class {name} {{");
    let mut first = true;
    for c in model.classes.iter().filter(|c| !c.is_abstract) {
        if !first {
            out.push('\n');
        }
        first = false;
        let _ = writeln!(out, "  /**");
        let _ = writeln!(out, "   * Returns a new object of class '<em>{}</em>'.", c.name);
        let _ = writeln!(out, "   * @generated");
        let _ = writeln!(out, "   */");
        let _ = writeln!(out, "  method create{}(): {} {{", c.name, c.name);
        let _ = writeln!(out, "    return new {}();", c.name);
        let _ = writeln!(out, "  }}");
    }
    out.push_str("}\n");
    out
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn outline(program: &Program, text: &str) -> CodeTree {
    CodeTree {
        imports: program.imports.iter().map(|i| i.path.clone()).collect(),
        classes: program
            .classes()
            .map(|c| ClassOutline {
                name: c.name.clone(),
                methods: c
                    .methods()
                    .map(|m| MethodOutline {
                        key: MethodKey::new(&c.name, &m.name, m.params.len()),
                        signature: method_header(m),
                        lines: (line_of(text, m.span.start), line_of(text, m.span.end.saturating_sub(1))),
                        is_trap: m.body.is_trap(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn key_of(c: &ClassDecl, m: &MethodDecl) -> MethodKey {
    MethodKey::new(&c.name, &m.name, m.params.len())
}

/// Trims trailing whitespace on every line; exactly one final newline.
fn normalize_trailing(text: &str) -> String {
    let mut out: String = text.lines().map(|l| format!("{}\n", l.trim_end())).collect();
    while out.ends_with("\n\n") {
        out.pop();
    }
    if out.is_empty() {
        out.push('\n');
    }
    out
}

fn same_signature(a: &MethodDecl, b: &MethodDecl) -> bool {
    a.ret == b.ret && a.params.len() == b.params.len() && a.params.iter().zip(&b.params).all(|(x, y)| x.ty == y.ty)
}

fn merge_program(
    base: &Program,
    base_text: &str,
    done: &Program,
    targets: &BTreeSet<MethodKey>,
) -> (String, MergeReport) {
    let mut report = MergeReport::default();
    // (start, end, replacement), non-overlapping.
    let mut edits: Vec<(usize, usize, String)> = Vec::new();

    let new_imports: Vec<&str> =
        done.imports.iter().map(|i| i.path.as_str()).filter(|p| !base.imports.iter().any(|b| b.path == *p)).fold(
            Vec::new(),
            |mut acc, p| {
                if !acc.contains(&p) {
                    acc.push(p);
                }
                acc
            },
        );
    if !new_imports.is_empty() {
        let at = base
            .imports
            .last()
            .map_or(0, |i| base_text[i.span.end..].find('\n').map_or(base_text.len(), |n| i.span.end + n + 1));
        let mut text: String = new_imports.iter().map(|p| format!("import {p};\n")).collect();
        if base.imports.is_empty() {
            text.push('\n');
        }
        edits.push((at, at, text));
        report.added_imports = new_imports.iter().map(|s| s.to_string()).collect();
    }

    for d in &done.decls {
        let name = match d {
            Decl::Class(c) => &c.name,
            Decl::Enum(e) => &e.name,
        };
        let known = base.decls.iter().any(|b| match (b, d) {
            (Decl::Class(x), Decl::Class(_)) => &x.name == name,
            (Decl::Enum(x), Decl::Enum(y)) => x.name == y.name && x.literals == y.literals,
            _ => false,
        });
        if !known {
            report.rejected_edits.push((name.clone(), "new or changed top-level type outside the unit".into()));
        }
    }

    for bc in base.classes() {
        let Some(dc) = done.class(&bc.name) else { continue };
        if dc.super_name != bc.super_name || dc.is_abstract != bc.is_abstract {
            report.rejected_edits.push((bc.name.clone(), "class header changes are not permitted".into()));
        }
        for f in dc.fields() {
            match bc.fields().find(|x| x.name == f.name) {
                Some(bf) if bf.ty == f.ty => {}
                Some(_) => report.rejected_edits.push((format!("{}.{}", bc.name, f.name), "field type change".into())),
                None => report.rejected_edits.push((format!("{}.{}", bc.name, f.name), "new field".into())),
            }
        }
        let mut helpers = String::new();
        for m in dc.methods() {
            let key = key_of(bc, m);
            let loc = key.to_string();
            match bc.method(&m.name, m.params.len()) {
                Some(bm) if !same_signature(bm, m) => {
                    report.rejected_edits.push((loc, "signature change".into()));
                }
                Some(bm) if targets.contains(&key) => {
                    if !m.body.is_trap() && m.body != bm.body {
                        edits.push((bm.body.span.start, bm.body.span.end, block_to_string(&m.body, 1)));
                        report.replaced_methods.push(key);
                    }
                }
                Some(bm) => {
                    if m.body != bm.body && !m.body.is_trap() {
                        report.rejected_edits.push((loc, "modification of a method outside the targets".into()));
                    }
                }
                None if bc.methods().any(|x| x.name == m.name) => {
                    report.rejected_edits.push((loc, "helper name collides with an existing method".into()));
                }
                None if report.added_helpers.iter().any(|k| k.class == bc.name && k.name == m.name) => {
                    report.rejected_edits.push((loc, "duplicate helper".into()));
                }
                None => {
                    helpers.push('\n');
                    print_method(&mut helpers, m, 1);
                    report.added_helpers.push(key);
                }
            }
        }
        if !helpers.is_empty() {
            edits.push((bc.close.start, bc.close.start, helpers));
        }
    }

    edits.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
    let mut text = base_text.to_string();
    for (s, e, r) in edits {
        text.replace_range(s..e, &r);
    }
    (normalize_trailing(&text), report)
}

fn parse_unit(unit: &SourceUnit) -> Result<Program, Vec<Diagnostic>> {
    minioo::parse_unit(&unit.path, &unit.text).map_err(|d| vec![d])
}

impl MiniOoBackend {
    fn parsed(units: &[SourceUnit]) -> (Vec<(&SourceUnit, Program)>, Vec<Diagnostic>) {
        let mut ok = Vec::new();
        let mut diags = Vec::new();
        for u in units {
            match parse_unit(u) {
                Ok(p) => ok.push((u, p)),
                Err(mut d) => diags.append(&mut d),
            }
        }
        (ok, diags)
    }

    /// Renders the unit for one model class.
    pub fn class_unit(&self, model: &ModelPackage, class: &str) -> Result<SourceUnit, BackendError> {
        let c = model.class(class).ok_or_else(|| BackendError::InvalidModel(format!("unknown class `{class}`")))?;
        Ok(SourceUnit { path: unit_path(&c.name), class_id: c.name.clone(), text: class_text(model, c)? })
    }
}

impl Backend for MiniOoBackend {
    fn language(&self) -> &str {
        "minioo"
    }

    fn file_extension(&self) -> &str {
        "mo"
    }

    fn generate_skeleton(&self, model: &ModelPackage) -> Result<Vec<SourceUnit>, BackendError> {
        if let Some((r, _, _)) = model.operations().find(|(_, _, op)| op.spec.is_none()) {
            return Err(BackendError::UnannotatedOperation(r.to_string()));
        }
        let violations = crate::model::validate_model(model);
        if let Some(v) = violations.first() {
            return Err(BackendError::InvalidModel(v.message.clone()));
        }
        check_names(model)?;
        let mut units = Vec::new();
        for e in &model.enums {
            let mut text = format!("// Generated enumeration `{}`.\n", e.name);
            print_enum(
                &mut text,
                &EnumDecl { name: e.name.clone(), literals: e.literals.clone(), span: Default::default() },
            );
            units.push(SourceUnit { path: unit_path(&e.name), class_id: e.name.clone(), text });
        }
        for c in &model.classes {
            units.push(self.class_unit(model, &c.name)?);
        }
        let factory = factory_name(model);
        units.push(SourceUnit { path: unit_path(&factory), class_id: factory, text: factory_text(model) });
        Ok(units)
    }

    fn skeleton_signatures(&self, model: &ModelPackage, class: &str) -> Vec<String> {
        let Some(c) = model.class(class) else {
            return Vec::new();
        };
        let mut out: Vec<String> = Vec::new();
        for a in &c.attributes {
            let ty = if a.is_many { format!("List<{}>", a.ty) } else { a.ty.to_string() };
            out.push(format!("method {}(): {ty}", getter_name(&a.name, &a.ty, a.is_many)));
            if !a.is_many {
                out.push(format!("method set{0}(new{0}: {ty}): Void", capitalize(&a.name)));
            }
        }
        for r in &c.references {
            let ty = if r.is_many { format!("List<{}>", r.target) } else { r.target.clone() };
            out.push(format!("method get{}(): {ty}", capitalize(&r.name)));
            if !r.is_many {
                out.push(format!("method set{0}(new{0}: {ty}): Void", capitalize(&r.name)));
            }
        }
        out.push("method toString(): String".into());
        out.extend(c.operations.iter().map(op_header));
        out
    }

    fn operation_keys(&self, model: &ModelPackage, class: &str) -> BTreeSet<MethodKey> {
        model
            .class(class)
            .map(|c| c.operations.iter().map(|o| MethodKey::new(&c.name, &o.name, o.params.len())).collect())
            .unwrap_or_default()
    }

    fn parse_code(&self, unit: &SourceUnit) -> Result<CodeTree, Vec<Diagnostic>> {
        let p = parse_unit(unit)?;
        Ok(outline(&p, &unit.text))
    }

    fn compress(&self, unit: &SourceUnit, keep: &BTreeSet<MethodKey>) -> Result<SourceUnit, BackendError> {
        let mut p = parse_unit(unit).map_err(BackendError::Syntax)?;
        for c in p.classes_mut() {
            let name = c.name.clone();
            for m in &mut c.members {
                match m {
                    Member::Field(f) => f.init = None,
                    Member::Method(m) => {
                        if !keep.contains(&MethodKey::new(&name, &m.name, m.params.len())) {
                            m.doc = None;
                            m.body = Block::trap();
                        }
                    }
                }
            }
        }
        Ok(SourceUnit { path: unit.path.clone(), class_id: unit.class_id.clone(), text: print_program(&p) })
    }

    fn merge(
        &self,
        base: &SourceUnit,
        completed: &SourceUnit,
        targets: &BTreeSet<MethodKey>,
    ) -> Result<(SourceUnit, MergeReport), BackendError> {
        let bp = parse_unit(base).map_err(BackendError::Syntax)?;
        let dp = parse_unit(completed).map_err(BackendError::UnparseableCompletion)?;
        let (text, report) = merge_program(&bp, &base.text, &dp, targets);
        for (loc, why) in &report.rejected_edits {
            log::warn!("{}: rejected edit at {loc}: {why}", base.path);
        }
        Ok((SourceUnit { path: base.path.clone(), class_id: base.class_id.clone(), text }, report))
    }

    fn compile_check(&self, units: &[SourceUnit]) -> CompileResult {
        let (parsed, mut diags) = Self::parsed(units);
        let check: Vec<CheckUnit> = parsed
            .iter()
            .map(|(u, p)| CheckUnit { path: &u.path, text: &u.text, program: p, is_test: false })
            .collect();
        diags.extend(check_units(&check));
        diags.sort_by(|a, b| (a.path.as_str(), a.line).cmp(&(b.path.as_str(), b.line)));
        CompileResult::from_diagnostics(diags)
    }

    fn run_tests(&self, units: &[SourceUnit], tests: &[TestProgram]) -> Vec<TestOutcome> {
        let compiled = self.compile_check(units);
        if !compiled.ok {
            let first = compiled.diagnostics[0].to_string();
            return tests.iter().map(|t| TestOutcome::fail(&t.id, format!("units do not compile: {first}"))).collect();
        }
        let (parsed, _) = Self::parsed(units);
        let libs: Vec<&Program> = parsed.iter().map(|(_, p)| p).collect();
        tests
            .iter()
            .map(|t| {
                let path = format!("tests/{}.mot", t.id);
                let tp = match minioo::parse_unit(&path, &t.text) {
                    Ok(p) => p,
                    Err(d) => return TestOutcome::fail(&t.id, format!("test does not compile: {d}")),
                };
                let mut check: Vec<CheckUnit> = parsed
                    .iter()
                    .map(|(u, p)| CheckUnit { path: &u.path, text: &u.text, program: p, is_test: false })
                    .collect();
                check.push(CheckUnit { path: &path, text: &t.text, program: &tp, is_test: true });
                if let Some(d) = check_units(&check).first() {
                    return TestOutcome::fail(&t.id, format!("test does not compile: {d}"));
                }
                match minioo::run_test(&libs, &tp, self.step_budget) {
                    Ok(()) => TestOutcome::pass(&t.id),
                    Err(msg) => TestOutcome::fail(&t.id, msg),
                }
            })
            .collect()
    }

    fn split_units(&self, text: &str) -> Result<Vec<SourceUnit>, Vec<Diagnostic>> {
        let p = minioo::parse_unit("src/response.mo", text).map_err(|d| vec![d])?;
        let mut units = Vec::new();
        for d in &p.decls {
            let mut out: String = p.imports.iter().map(|im| format!("import {};\n", im.path)).collect();
            if !out.is_empty() {
                out.push('\n');
            }
            let name = match d {
                Decl::Class(c) => {
                    print_class(&mut out, c);
                    c.name.clone()
                }
                Decl::Enum(e) => {
                    print_enum(&mut out, e);
                    e.name.clone()
                }
            };
            units.push(SourceUnit { path: unit_path(&name), class_id: name, text: out });
        }
        Ok(units)
    }
}
