//! Reader for the `.cmdl` block format.
//!
//! ```text
//! package airline {
//!   enum Status { OPEN, CLOSED }
//!   class Airline {
//!     attr name: String;
//!     ref contains flights: Flight[*] opposite airline;
//!     op publishFlight(f: Flight, now: Date): Bool;
//!   }
//! }
//! ```
//!
//! Keywords are contextual, so model identifiers may reuse them.

use std::collections::HashSet;

use super::types::*;
use super::ModelError;
use crate::dates;
use crate::decompose::{InputSpec, MethodSpec};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(char),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ModelError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let err = |line: usize, message: String| ModelError::Syntax { line, message };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line });
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            let mut is_float = false;
            while i < chars.len() {
                let d = chars[i];
                if d.is_ascii_digit() {
                    i += 1;
                } else if d == '.' && chars.get(i + 1).is_some_and(|x| x.is_ascii_digit()) {
                    is_float = true;
                    i += 1;
                } else if (d == 'e' || d == 'E')
                    && chars.get(i + 1).is_some_and(|x| x.is_ascii_digit() || *x == '-' || *x == '+')
                {
                    is_float = true;
                    i += 2;
                } else {
                    break;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let tok = if is_float {
                Tok::Float(s.parse().map_err(|_| err(line, format!("bad number `{s}`")))?)
            } else {
                Tok::Int(s.parse().map_err(|_| err(line, format!("integer out of range `{s}`")))?)
            };
            out.push(Token { tok, line });
        } else if c == '"' {
            let start_line = line;
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(err(start_line, "unterminated string".into()));
                };
                i += 1;
                match ch {
                    '"' => break,
                    '\\' => {
                        let esc = chars.get(i).copied().ok_or_else(|| err(line, "unterminated string".into()))?;
                        i += 1;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            'r' => '\r',
                            '"' => '"',
                            '\\' => '\\',
                            other => return Err(err(line, format!("unknown escape `\\{other}`"))),
                        });
                    }
                    '\n' => {
                        line += 1;
                        s.push('\n');
                    }
                    other => s.push(other),
                }
            }
            out.push(Token { tok: Tok::Str(s), line: start_line });
        } else if "{}():;,=<>[]*.".contains(c) {
            out.push(Token { tok: Tok::Punct(c), line });
            i += 1;
        } else {
            return Err(err(line, format!("unexpected character `{c}`")));
        }
    }
    out.push(Token { tok: Tok::Eof, line });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ModelError> {
        Err(ModelError::Syntax { line: self.line(), message: message.into() })
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Float(x) => format!("`{x}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of file".into(),
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ModelError> {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{c}`, found {}", Self::describe(self.peek())))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ModelError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", Self::describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, ModelError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected identifier, found {}", Self::describe(&other))),
        }
    }

    fn string(&mut self) -> Result<String, ModelError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected string, found {}", Self::describe(&other))),
        }
    }

    fn package(&mut self) -> Result<ModelPackage, ModelError> {
        let mut pkg = ModelPackage { name: "model".into(), ..Default::default() };
        let wrapped = self.eat_kw("package");
        if wrapped {
            pkg.name = self.ident()?;
            self.expect_punct('{')?;
        }
        loop {
            match self.peek() {
                Tok::Punct('}') if wrapped => {
                    self.bump();
                    break;
                }
                Tok::Eof if !wrapped => break,
                Tok::Eof => return self.error("expected `}` closing the package"),
                _ => {}
            }
            if self.is_kw("enum") {
                pkg.enums.push(self.enum_def()?);
            } else if self.is_kw("class") || self.is_kw("abstract") {
                pkg.classes.push(self.class_def()?);
            } else {
                return self.error(format!("expected `class` or `enum`, found {}", Self::describe(self.peek())));
            }
        }
        if *self.peek() != Tok::Eof {
            return self.error("unexpected content after package");
        }
        Ok(pkg)
    }

    fn enum_def(&mut self) -> Result<EnumDef, ModelError> {
        self.expect_kw("enum")?;
        let name = self.ident()?;
        self.expect_punct('{')?;
        let mut literals = Vec::new();
        while !self.eat_punct('}') {
            literals.push(self.ident()?);
            if !self.eat_punct(',') {
                self.expect_punct('}')?;
                break;
            }
        }
        Ok(EnumDef { name, literals })
    }

    fn class_def(&mut self) -> Result<ClassDef, ModelError> {
        let is_abstract = self.eat_kw("abstract");
        self.expect_kw("class")?;
        let name = self.ident()?;
        let super_class = if self.eat_kw("extends") {
            let s = self.ident()?;
            if *self.peek() == Tok::Punct(',') {
                return self.error("multiple inheritance is not supported");
            }
            Some(s)
        } else {
            None
        };
        let mut class = ClassDef { name, is_abstract, super_class, ..Default::default() };
        self.expect_punct('{')?;
        while !self.eat_punct('}') {
            if self.eat_kw("attr") {
                class.attributes.push(self.attribute()?);
            } else if self.eat_kw("ref") {
                class.references.push(self.reference()?);
            } else if self.eat_kw("op") {
                class.operations.push(self.operation()?);
            } else {
                return self
                    .error(format!("expected `attr`, `ref`, `op` or `}}`, found {}", Self::describe(self.peek())));
            }
        }
        Ok(class)
    }

    fn type_ref(&mut self) -> Result<TypeRef, ModelError> {
        let name = self.ident()?;
        Ok(match name.as_str() {
            "Int" => TypeRef::Int,
            "Float" => TypeRef::Float,
            "Bool" => TypeRef::Bool,
            "String" => TypeRef::String,
            "Date" => TypeRef::Date,
            "Void" => TypeRef::Void,
            "List" => {
                self.expect_punct('<')?;
                let inner = self.type_ref()?;
                self.expect_punct('>')?;
                TypeRef::ListOf(Box::new(inner))
            }
            // Resolved against declared classes and enums after parsing.
            _ => TypeRef::Class(name),
        })
    }

    fn many_marker(&mut self) -> Result<bool, ModelError> {
        if self.eat_punct('[') {
            self.expect_punct('*')?;
            self.expect_punct(']')?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn attribute(&mut self) -> Result<AttributeDef, ModelError> {
        let name = self.ident()?;
        self.expect_punct(':')?;
        let ty = self.type_ref()?;
        let is_many = self.many_marker()?;
        let default_value = if self.eat_punct('=') { Some(self.literal(&ty)?) } else { None };
        self.expect_punct(';')?;
        Ok(AttributeDef { name, ty, is_many, default_value })
    }

    fn literal(&mut self, ty: &TypeRef) -> Result<Literal, ModelError> {
        let line = self.line();
        Ok(match self.bump() {
            Tok::Int(n) => Literal::Int(n),
            Tok::Float(x) => Literal::Float(x),
            Tok::Str(s) if *ty == TypeRef::Date => match dates::parse_iso(&s) {
                Some(d) => Literal::Date(d),
                None => {
                    return Err(ModelError::Syntax {
                        line,
                        message: format!("invalid date literal \"{s}\" (expected YYYY-MM-DD)"),
                    })
                }
            },
            Tok::Str(s) => Literal::Str(s),
            Tok::Ident(s) if s == "true" => Literal::Bool(true),
            Tok::Ident(s) if s == "false" => Literal::Bool(false),
            Tok::Ident(s) => Literal::EnumLiteral(s),
            other => {
                return Err(ModelError::Syntax {
                    line,
                    message: format!("expected literal, found {}", Self::describe(&other)),
                })
            }
        })
    }

    fn reference(&mut self) -> Result<ReferenceDef, ModelError> {
        let is_containment = self.eat_kw("contains");
        let name = self.ident()?;
        self.expect_punct(':')?;
        let target = self.ident()?;
        let is_many = self.many_marker()?;
        let opposite = if self.eat_kw("opposite") { Some(self.ident()?) } else { None };
        self.expect_punct(';')?;
        Ok(ReferenceDef { name, target, is_many, is_containment, opposite })
    }

    fn operation(&mut self) -> Result<OperationDef, ModelError> {
        let name = self.ident()?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if !self.eat_punct(')') {
            loop {
                let pname = self.ident()?;
                self.expect_punct(':')?;
                let ty = self.type_ref()?;
                params.push(Param { name: pname, ty });
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        let return_type = if self.eat_punct(':') { self.type_ref()? } else { TypeRef::Void };
        let spec = if self.eat_kw("spec") { Some(self.spec_block()?) } else { None };
        self.eat_punct(';');
        Ok(OperationDef { name, params, return_type, spec })
    }

    fn spec_block(&mut self) -> Result<MethodSpec, ModelError> {
        self.expect_punct('{')?;
        let mut spec = MethodSpec::default();
        while !self.eat_punct('}') {
            let key = self.ident()?;
            match key.as_str() {
                "summary" => spec.summary = self.string()?,
                "algorithm" => spec.algorithm = self.string()?,
                "output" => spec.output = self.string()?,
                "pre" => spec.preconditions.push(self.string()?),
                "post" => spec.postconditions.push(self.string()?),
                "input" => {
                    let name = self.ident()?;
                    let description = self.string()?;
                    spec.inputs.push(InputSpec { name, description });
                }
                other => return self.error(format!("unknown spec entry `{other}`")),
            }
            self.expect_punct(';')?;
        }
        Ok(spec)
    }
}

/// Parses a model document, resolving type names and rejecting duplicate
/// class/enum names. Structural invariants (acyclic inheritance, opposite
/// symmetry, ...) are reported by [`super::validate_model`].
pub fn parse_model(text: &str) -> Result<ModelPackage, ModelError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let mut pkg = parser.package()?;

    let mut seen = HashSet::new();
    for name in pkg.classes.iter().map(|c| &c.name).chain(pkg.enums.iter().map(|e| &e.name)) {
        if !seen.insert(name.clone()) {
            return Err(ModelError::DuplicateName(name.clone()));
        }
    }
    resolve_types(&mut pkg)?;
    Ok(pkg)
}

fn resolve_types(pkg: &mut ModelPackage) -> Result<(), ModelError> {
    let classes: HashSet<String> = pkg.classes.iter().map(|c| c.name.clone()).collect();
    let enums: HashSet<String> = pkg.enums.iter().map(|e| e.name.clone()).collect();
    let resolve = |ty: &mut TypeRef| -> Result<(), ModelError> {
        fn go(ty: &mut TypeRef, classes: &HashSet<String>, enums: &HashSet<String>) -> Result<(), ModelError> {
            match ty {
                TypeRef::ListOf(inner) => go(inner, classes, enums),
                TypeRef::Class(name) | TypeRef::Enum(name) => {
                    if classes.contains(name.as_str()) {
                        *ty = TypeRef::Class(std::mem::take(name));
                    } else if enums.contains(name.as_str()) {
                        *ty = TypeRef::Enum(std::mem::take(name));
                    } else {
                        return Err(ModelError::UnresolvedType(name.clone()));
                    }
                    Ok(())
                }
                _ => Ok(()),
            }
        }
        go(ty, &classes, &enums)
    };
    for class in &mut pkg.classes {
        if let Some(s) = &class.super_class {
            if !classes.contains(s) {
                return Err(ModelError::UnresolvedType(s.clone()));
            }
        }
        for attr in &mut class.attributes {
            resolve(&mut attr.ty)?;
        }
        for r in &class.references {
            if !classes.contains(&r.target) {
                return Err(ModelError::UnresolvedType(r.target.clone()));
            }
        }
        for op in &mut class.operations {
            for p in &mut op.params {
                resolve(&mut p.ty)?;
            }
            resolve(&mut op.return_type)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn employee_without_package_wrapper() {
        let m =
            parse_model("class Employee { attr hireDate: Date; op computeLongServiceBonus(currentDate: Date): Float }")
                .unwrap();
        assert_eq!(m.classes.len(), 1);
        let c = &m.classes[0];
        assert_eq!(c.attributes.len(), 1);
        assert_eq!(c.operations.len(), 1);
        assert_eq!(c.operations[0].return_type, TypeRef::Float);
        assert_eq!(c.operations[0].params[0].ty, TypeRef::Date);
    }

    #[test]
    fn empty_package() {
        let m = parse_model("package p {}").unwrap();
        assert_eq!(m.name, "p");
        assert!(m.classes.is_empty());
        assert!(m.enums.is_empty());
    }

    #[test]
    fn undeclared_superclass() {
        let err = parse_model("package p { class A extends B {} }").unwrap_err();
        assert_eq!(err, ModelError::UnresolvedType("B".into()));
    }

    #[test]
    fn duplicate_class() {
        let err = parse_model("package p { class A {} enum A { X } }").unwrap_err();
        assert_eq!(err, ModelError::DuplicateName("A".into()));
    }

    #[test]
    fn multiple_inheritance_rejected() {
        let err = parse_model("package p { class A {} class B {} class C extends A, B {} }").unwrap_err();
        assert!(matches!(err, ModelError::Syntax { line: 1, .. }));
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_model("package p {\n  class A {\n    attr x Int;\n  }\n}").unwrap_err();
        assert!(matches!(err, ModelError::Syntax { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn enums_defaults_and_specs() {
        let m = parse_model(
            r#"package p {
              // comment
              enum Status { OPEN, CLOSED, }
              class A {
                attr s: Status = OPEN;
                attr since: Date = "2020-02-29";
                attr tags: String[*];
                ref contains bs: B[*] opposite owner;
                op f(xs: List<List<Int>>) spec {
                  summary "adds \"things\"";
                  input xs "a matrix";
                  pre "xs non-empty";
                };
              }
              class B { ref owner: A opposite bs; }
            }"#,
        )
        .unwrap();
        let a = m.class("A").unwrap();
        assert_eq!(a.attributes[0].ty, TypeRef::Enum("Status".into()));
        assert_eq!(a.attributes[1].default_value, Some(Literal::Date(18321)));
        assert!(a.attributes[2].is_many);
        assert!(a.references[0].is_containment);
        let spec = a.operations[0].spec.as_ref().unwrap();
        assert_eq!(spec.summary, "adds \"things\"");
        assert_eq!(spec.inputs[0].name, "xs");
        assert_eq!(a.operations[0].return_type, TypeRef::Void);
    }
}
