//! Cross-unit name resolution and type checking.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::ast::*;
use crate::backend::{Diagnostic, DiagnosticKind};

/// One parsed file handed to the checker.
#[derive(Clone, Copy)]
pub struct CheckUnit<'a> {
    pub path: &'a str,
    pub text: &'a str,
    pub program: &'a Program,
    /// Test programs may contain top-level statements.
    pub is_test: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Ty {
    Int,
    Float,
    Bool,
    Str,
    Date,
    Void,
    Class(String),
    Enum(String),
    List(Box<Ty>),
    Null,
    EmptyList,
    /// Result of an already-reported error; compatible with everything.
    Error,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => f.write_str("Int"),
            Ty::Float => f.write_str("Float"),
            Ty::Bool => f.write_str("Bool"),
            Ty::Str => f.write_str("String"),
            Ty::Date => f.write_str("Date"),
            Ty::Void => f.write_str("Void"),
            Ty::Class(n) | Ty::Enum(n) => f.write_str(n),
            Ty::List(t) => write!(f, "List<{t}>"),
            Ty::Null => f.write_str("null"),
            Ty::EmptyList => f.write_str("List<?>"),
            Ty::Error => f.write_str("<error>"),
        }
    }
}

impl Ty {
    fn is_numeric(&self) -> bool {
        matches!(self, Ty::Int | Ty::Float | Ty::Error)
    }
}

/// Declarations visible to every unit.
pub(crate) struct World<'a> {
    pub classes: HashMap<&'a str, &'a ClassDecl>,
    pub enums: HashMap<&'a str, &'a EnumDecl>,
}

impl<'a> World<'a> {
    pub fn new(programs: impl IntoIterator<Item = &'a Program>) -> Self {
        let mut classes = HashMap::new();
        let mut enums = HashMap::new();
        for p in programs {
            for d in &p.decls {
                match d {
                    Decl::Class(c) => {
                        classes.entry(c.name.as_str()).or_insert(c);
                    }
                    Decl::Enum(e) => {
                        enums.entry(e.name.as_str()).or_insert(e);
                    }
                }
            }
        }
        World { classes, enums }
    }

    /// `name` followed by its ancestors; stops at unknown names and cycles.
    pub fn chain(&self, name: &str) -> Vec<&'a ClassDecl> {
        let mut out: Vec<&'a ClassDecl> = Vec::new();
        let mut cur = self.classes.get(name).copied();
        while let Some(c) = cur {
            if out.iter().any(|x| x.name == c.name) {
                break;
            }
            out.push(c);
            cur = c.super_name.as_deref().and_then(|s| self.classes.get(s).copied());
        }
        out
    }

    pub fn find_field(&self, class: &str, name: &str) -> Option<&'a FieldDecl> {
        self.chain(class).into_iter().find_map(|c| c.fields().find(|f| f.name == name))
    }

    /// Nearest method named `name`, regardless of arity.
    pub fn find_method(&self, class: &str, name: &str) -> Option<&'a MethodDecl> {
        self.chain(class).into_iter().find_map(|c| c.methods().find(|m| m.name == name))
    }

    pub fn is_subclass(&self, sub: &str, sup: &str) -> bool {
        self.chain(sub).iter().any(|c| c.name == sup)
    }

    pub fn resolve(&self, t: &Type) -> Result<Ty, String> {
        Ok(match t {
            Type::Int => Ty::Int,
            Type::Float => Ty::Float,
            Type::Bool => Ty::Bool,
            Type::Str => Ty::Str,
            Type::Date => Ty::Date,
            Type::Void => Ty::Void,
            Type::List(inner) => Ty::List(Box::new(self.resolve(inner)?)),
            Type::Named(n) if self.classes.contains_key(n.as_str()) => Ty::Class(n.clone()),
            Type::Named(n) if self.enums.contains_key(n.as_str()) => Ty::Enum(n.clone()),
            Type::Named(n) => return Err(n.clone()),
        })
    }

    pub fn assignable(&self, from: &Ty, to: &Ty) -> bool {
        match (from, to) {
            (Ty::Error, _) | (_, Ty::Error) => true,
            (a, b) if a == b => true,
            (Ty::Int, Ty::Float) => true,
            (Ty::Null, Ty::Str | Ty::Date | Ty::Class(_) | Ty::Enum(_) | Ty::List(_)) => true,
            (Ty::EmptyList, Ty::List(_)) => true,
            (Ty::Class(a), Ty::Class(b)) => self.is_subclass(a, b),
            (Ty::List(a), Ty::List(b)) => matches!((&**a, &**b), (Ty::Error, _) | (_, Ty::Error)),
            _ => false,
        }
    }
}

const STATIC_TYPES: &[&str] = &["Math", "Date"];

struct Ctx<'a> {
    class: Option<&'a str>,
    /// `None` at test top level, where `return` is not allowed.
    ret: Option<Ty>,
    scopes: Vec<HashMap<String, Ty>>,
}

impl Ctx<'_> {
    fn lookup(&self, name: &str) -> Option<&Ty> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }
}

struct Checker<'a, 'w> {
    world: &'w World<'a>,
    path: &'a str,
    text: &'a str,
    out: &'w mut Vec<Diagnostic>,
}

impl<'a> Checker<'a, '_> {
    fn report(&mut self, kind: DiagnosticKind, line: usize, message: impl Into<String>) {
        self.out.push(Diagnostic::new(self.path, self.text, kind, line, message));
    }

    fn resolve(&mut self, t: &Type, line: usize) -> Ty {
        match self.world.resolve(t) {
            Ok(ty) => ty,
            Err(name) => {
                self.report(DiagnosticKind::UnresolvedSymbol, line, format!("cannot find type `{name}`"));
                Ty::Error
            }
        }
    }

    fn expect(&mut self, from: &Ty, to: &Ty, line: usize, what: &str) {
        if !self.world.assignable(from, to) {
            self.report(DiagnosticKind::TypeMismatch, line, format!("{what}: expected `{to}`, found `{from}`"));
        }
    }

    fn class_decl(&mut self, c: &'a ClassDecl) {
        let line = c.span.line;
        if let Some(s) = &c.super_name {
            if !self.world.classes.contains_key(s.as_str()) {
                self.report(DiagnosticKind::UnresolvedSymbol, line, format!("cannot find class `{s}`"));
            } else if self.world.is_subclass(s, &c.name) {
                self.report(DiagnosticKind::Other, line, format!("cyclic inheritance involving `{}`", c.name));
            }
        }
        let ancestors: Vec<&ClassDecl> = self.world.chain(&c.name).into_iter().skip(1).collect();
        let mut fields = HashSet::new();
        for f in c.fields() {
            if !fields.insert(f.name.as_str()) || ancestors.iter().any(|a| a.fields().any(|x| x.name == f.name)) {
                self.report(DiagnosticKind::Other, f.span.line, format!("duplicate field `{}`", f.name));
            }
            let ty = self.resolve(&f.ty, f.span.line);
            if ty == Ty::Void {
                self.report(DiagnosticKind::TypeMismatch, f.span.line, "field cannot have type `Void`");
            }
            if let Some(init) = &f.init {
                let mut ctx = Ctx { class: Some(&c.name), ret: None, scopes: vec![HashMap::new()] };
                let it = self.expr(init, &mut ctx);
                self.expect(&it, &ty, init.span.line, &format!("initializer of `{}`", f.name));
            }
        }
        let mut methods = HashSet::new();
        for m in c.methods() {
            let line = m.header.line;
            if !methods.insert(m.name.as_str()) {
                self.report(
                    DiagnosticKind::Other,
                    line,
                    format!("duplicate method `{}` (overloading is not supported)", m.name),
                );
            }
            if let Some(parent) = ancestors.iter().find_map(|a| a.methods().find(|x| x.name == m.name)) {
                self.check_override(m, parent, line);
            }
            self.method(c, m);
        }
    }

    fn check_override(&mut self, m: &MethodDecl, parent: &MethodDecl, line: usize) {
        if m.params.len() != parent.params.len() {
            self.report(
                DiagnosticKind::Other,
                line,
                format!("method `{}` overloads an inherited method (overloading is not supported)", m.name),
            );
            return;
        }
        let same_params =
            m.params.iter().zip(&parent.params).all(|(a, b)| self.world.resolve(&a.ty) == self.world.resolve(&b.ty));
        let ret_ok = match (self.world.resolve(&m.ret), self.world.resolve(&parent.ret)) {
            (Ok(a), Ok(b)) => self.world.assignable(&a, &b) && (a == Ty::Void) == (b == Ty::Void),
            _ => true,
        };
        if !same_params || !ret_ok {
            self.report(
                DiagnosticKind::TypeMismatch,
                line,
                format!("method `{}` overrides an inherited method with an incompatible signature", m.name),
            );
        }
    }

    fn method(&mut self, c: &'a ClassDecl, m: &'a MethodDecl) {
        let line = m.header.line;
        let mut scope = HashMap::new();
        for p in &m.params {
            let ty = self.resolve(&p.ty, line);
            if ty == Ty::Void {
                self.report(DiagnosticKind::TypeMismatch, line, format!("parameter `{}` cannot be `Void`", p.name));
            }
            if scope.insert(p.name.clone(), ty).is_some() {
                self.report(DiagnosticKind::Other, line, format!("duplicate parameter `{}`", p.name));
            }
        }
        let ret = self.resolve(&m.ret, line);
        let mut ctx = Ctx { class: Some(&c.name), ret: Some(ret.clone()), scopes: vec![scope] };
        self.block(&m.body, &mut ctx);
        if ret != Ty::Void && !block_returns(&m.body) {
            let end_line = line_of(self.text, m.body.span.end.saturating_sub(1));
            self.report(DiagnosticKind::Other, end_line, format!("missing return statement in method `{}`", m.name));
        }
    }

    fn block(&mut self, b: &Block, ctx: &mut Ctx<'a>) {
        ctx.scopes.push(HashMap::new());
        for s in &b.stmts {
            self.stmt(s, ctx);
        }
        ctx.scopes.pop();
    }

    pub(crate) fn stmt(&mut self, s: &Stmt, ctx: &mut Ctx<'a>) {
        let line = s.span.line;
        match &s.kind {
            StmtKind::Var { name, ty, init } => {
                let declared = self.resolve(ty, line);
                let it = self.expr(init, ctx);
                self.expect(&it, &declared, line, &format!("initializer of `{name}`"));
                let scope = ctx.scopes.last_mut().expect("scope");
                if scope.insert(name.clone(), declared).is_some() {
                    self.report(DiagnosticKind::Other, line, format!("variable `{name}` is already declared"));
                }
            }
            StmtKind::Assign { target, value } => {
                let tt = self.lvalue(target, ctx);
                let vt = self.expr(value, ctx);
                self.expect(&vt, &tt, line, "assignment");
            }
            StmtKind::If { cond, then, els } => {
                let ct = self.expr(cond, ctx);
                self.expect(&ct, &Ty::Bool, cond.span.line, "condition");
                self.block(then, ctx);
                match els {
                    Some(Else::Block(b)) => self.block(b, ctx),
                    Some(Else::If(s)) => self.stmt(s, ctx),
                    None => {}
                }
            }
            StmtKind::While { cond, body } => {
                let ct = self.expr(cond, ctx);
                self.expect(&ct, &Ty::Bool, cond.span.line, "condition");
                self.block(body, ctx);
            }
            StmtKind::ForEach { var, iter, body } => {
                let it = self.expr(iter, ctx);
                let elem = match it {
                    Ty::List(t) => *t,
                    Ty::Error | Ty::EmptyList => Ty::Error,
                    other => {
                        self.report(
                            DiagnosticKind::TypeMismatch,
                            iter.span.line,
                            format!("for-each expects a list, found `{other}`"),
                        );
                        Ty::Error
                    }
                };
                ctx.scopes.push(HashMap::from([(var.clone(), elem)]));
                self.block(body, ctx);
                ctx.scopes.pop();
            }
            StmtKind::Return(value) => match (&ctx.ret, value) {
                (None, _) => self.report(DiagnosticKind::Other, line, "`return` outside a method"),
                (Some(Ty::Void), Some(v)) => {
                    self.expr(v, ctx);
                    self.report(DiagnosticKind::TypeMismatch, line, "cannot return a value from a `Void` method");
                }
                (Some(Ty::Void), None) => {}
                (Some(r), None) => {
                    let r = r.clone();
                    self.report(DiagnosticKind::TypeMismatch, line, format!("missing return value of type `{r}`"));
                }
                (Some(r), Some(v)) => {
                    let r = r.clone();
                    let vt = self.expr(v, ctx);
                    self.expect(&vt, &r, line, "return value");
                }
            },
            StmtKind::Raise { payload, .. } => {
                let pt = self.expr(payload, ctx);
                self.expect(&pt, &Ty::Str, line, "raise payload");
            }
            StmtKind::Assert(e) => {
                let t = self.expr(e, ctx);
                self.expect(&t, &Ty::Bool, line, "assert");
            }
            StmtKind::Expr(e) => {
                self.expr(e, ctx);
            }
        }
    }

    fn lvalue(&mut self, target: &Expr, ctx: &mut Ctx<'a>) -> Ty {
        match &target.kind {
            ExprKind::Name(_) | ExprKind::Field { .. } => self.expr(target, ctx),
            _ => {
                self.report(DiagnosticKind::Other, target.span.line, "invalid assignment target");
                Ty::Error
            }
        }
    }

    fn is_value_name(&self, name: &str, ctx: &Ctx<'a>) -> bool {
        ctx.lookup(name).is_some() || ctx.class.is_some_and(|c| self.world.find_field(c, name).is_some())
    }

    fn field_of(&mut self, class: &str, name: &str, line: usize) -> Ty {
        match self.world.find_field(class, name) {
            Some(f) => self.world.resolve(&f.ty).unwrap_or(Ty::Error),
            None => {
                self.report(
                    DiagnosticKind::UnresolvedSymbol,
                    line,
                    format!("cannot find field `{name}` in class `{class}`"),
                );
                Ty::Error
            }
        }
    }

    fn expr(&mut self, e: &Expr, ctx: &mut Ctx<'a>) -> Ty {
        let line = e.span.line;
        match &e.kind {
            ExprKind::Int(_) => Ty::Int,
            ExprKind::Float(_) => Ty::Float,
            ExprKind::Str(_) => Ty::Str,
            ExprKind::Bool(_) => Ty::Bool,
            ExprKind::Null => Ty::Null,
            ExprKind::This => match ctx.class {
                Some(c) => Ty::Class(c.to_string()),
                None => {
                    self.report(DiagnosticKind::UnresolvedSymbol, line, "`this` used outside a class");
                    Ty::Error
                }
            },
            ExprKind::Name(n) => {
                if let Some(t) = ctx.lookup(n) {
                    return t.clone();
                }
                if let Some(c) = ctx.class {
                    if self.world.find_field(c, n).is_some() {
                        return self.field_of(c, n, line);
                    }
                }
                if self.world.classes.contains_key(n.as_str())
                    || self.world.enums.contains_key(n.as_str())
                    || STATIC_TYPES.contains(&n.as_str())
                {
                    self.report(DiagnosticKind::Other, line, format!("`{n}` is a type, not a value"));
                } else {
                    self.report(DiagnosticKind::UnresolvedSymbol, line, format!("cannot find symbol `{n}`"));
                }
                Ty::Error
            }
            ExprKind::Field { obj, name } => {
                if let ExprKind::Name(n) = &obj.kind {
                    if !self.is_value_name(n, ctx) {
                        if let Some(en) = self.world.enums.get(n.as_str()) {
                            if en.literals.iter().any(|l| l == name) {
                                return Ty::Enum(n.clone());
                            }
                            self.report(
                                DiagnosticKind::UnresolvedSymbol,
                                line,
                                format!("cannot find literal `{name}` in enum `{n}`"),
                            );
                            return Ty::Error;
                        }
                    }
                }
                match self.expr(obj, ctx) {
                    Ty::Class(c) => self.field_of(&c, name, line),
                    Ty::Error => Ty::Error,
                    other => {
                        self.report(
                            DiagnosticKind::UnresolvedSymbol,
                            line,
                            format!("cannot find field `{name}` on type `{other}`"),
                        );
                        Ty::Error
                    }
                }
            }
            ExprKind::Call { recv, name, args } => self.call(recv.as_deref(), name, args, line, ctx),
            ExprKind::New { class } => match self.world.classes.get(class.as_str()) {
                Some(c) if c.is_abstract => {
                    self.report(DiagnosticKind::Other, line, format!("cannot instantiate abstract class `{class}`"));
                    Ty::Class(class.clone())
                }
                Some(_) => Ty::Class(class.clone()),
                None => {
                    self.report(DiagnosticKind::UnresolvedSymbol, line, format!("cannot find class `{class}`"));
                    Ty::Error
                }
            },
            ExprKind::List(items) => {
                let mut elem: Option<Ty> = None;
                for it in items {
                    let t = self.expr(it, ctx);
                    elem = Some(match elem {
                        None => t,
                        Some(prev) => self.join(prev, t, it.span.line),
                    });
                }
                match elem {
                    None => Ty::EmptyList,
                    Some(Ty::Null) => Ty::EmptyList,
                    Some(t) => Ty::List(Box::new(t)),
                }
            }
            ExprKind::Unary { op, operand } => {
                let t = self.expr(operand, ctx);
                match op {
                    UnOp::Not => {
                        self.expect(&t, &Ty::Bool, line, "operand of `!`");
                        Ty::Bool
                    }
                    UnOp::Neg if t.is_numeric() => t,
                    UnOp::Neg => {
                        self.report(DiagnosticKind::TypeMismatch, line, format!("cannot negate `{t}`"));
                        Ty::Error
                    }
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.expr(lhs, ctx);
                let b = self.expr(rhs, ctx);
                self.binary(*op, a, b, line)
            }
        }
    }

    fn join(&mut self, a: Ty, b: Ty, line: usize) -> Ty {
        if self.world.assignable(&b, &a) {
            a
        } else if self.world.assignable(&a, &b) {
            b
        } else {
            self.report(
                DiagnosticKind::TypeMismatch,
                line,
                format!("list elements of incompatible types `{a}` and `{b}`"),
            );
            Ty::Error
        }
    }

    fn binary(&mut self, op: BinOp, a: Ty, b: Ty, line: usize) -> Ty {
        use BinOp::*;
        let mismatch = |me: &mut Self| {
            me.report(
                DiagnosticKind::TypeMismatch,
                line,
                format!("operator `{}` cannot be applied to `{a}` and `{b}`", op.symbol()),
            );
            Ty::Error
        };
        match op {
            Or | And => {
                if self.world.assignable(&a, &Ty::Bool) && self.world.assignable(&b, &Ty::Bool) {
                    Ty::Bool
                } else {
                    mismatch(self)
                }
            }
            Add if a == Ty::Str || b == Ty::Str => {
                if a == Ty::Void || b == Ty::Void {
                    mismatch(self)
                } else {
                    Ty::Str
                }
            }
            Add | Sub | Mul | Div | Rem => {
                if !a.is_numeric() || !b.is_numeric() {
                    mismatch(self)
                } else if a == Ty::Error || b == Ty::Error {
                    Ty::Error
                } else if a == Ty::Int && b == Ty::Int {
                    Ty::Int
                } else {
                    Ty::Float
                }
            }
            Lt | Le | Gt | Ge => {
                let ok = (a.is_numeric() && b.is_numeric())
                    || matches!((&a, &b), (Ty::Date, Ty::Date) | (Ty::Str, Ty::Str))
                    || a == Ty::Error
                    || b == Ty::Error;
                if ok {
                    Ty::Bool
                } else {
                    mismatch(self)
                }
            }
            Eq | Ne => {
                let ok = (a.is_numeric() && b.is_numeric())
                    || self.world.assignable(&a, &b)
                    || self.world.assignable(&b, &a);
                if ok && a != Ty::Void && b != Ty::Void {
                    Ty::Bool
                } else {
                    mismatch(self)
                }
            }
        }
    }

    fn args(&mut self, args: &[Expr], ctx: &mut Ctx<'a>) -> Vec<(Ty, usize)> {
        args.iter().map(|a| (self.expr(a, ctx), a.span.line)).collect()
    }

    fn check_args(&mut self, what: &str, params: &[Ty], args: &[(Ty, usize)], line: usize) -> bool {
        if params.len() != args.len() {
            self.report(
                DiagnosticKind::TypeMismatch,
                line,
                format!("`{what}` expects {} argument(s), found {}", params.len(), args.len()),
            );
            return false;
        }
        for (i, (p, (a, l))) in params.iter().zip(args).enumerate() {
            self.expect(a, p, *l, &format!("argument {} of `{what}`", i + 1));
        }
        true
    }

    fn call(&mut self, recv: Option<&Expr>, name: &str, args: &[Expr], line: usize, ctx: &mut Ctx<'a>) -> Ty {
        let Some(recv) = recv else {
            let Some(class) = ctx.class else {
                self.args(args, ctx);
                self.report(DiagnosticKind::UnresolvedSymbol, line, format!("cannot find function `{name}`"));
                return Ty::Error;
            };
            return self.method_call(class.to_string(), name, args, line, ctx);
        };
        if let ExprKind::Name(n) = &recv.kind {
            if !self.is_value_name(n, ctx) && STATIC_TYPES.contains(&n.as_str()) {
                let argt = self.args(args, ctx);
                return self.static_call(n, name, &argt, line);
            }
        }
        let rt = self.expr(recv, ctx);
        match rt {
            Ty::Class(c) => self.method_call(c, name, args, line, ctx),
            Ty::Error => {
                self.args(args, ctx);
                Ty::Error
            }
            other => {
                let argt = self.args(args, ctx);
                self.builtin_method(&other, name, &argt, line)
            }
        }
    }

    fn method_call(&mut self, class: String, name: &str, args: &[Expr], line: usize, ctx: &mut Ctx<'a>) -> Ty {
        let argt = self.args(args, ctx);
        let Some(m) = self.world.find_method(&class, name) else {
            self.report(
                DiagnosticKind::UnresolvedSymbol,
                line,
                format!("cannot find method `{name}` in class `{class}`"),
            );
            return Ty::Error;
        };
        let params: Vec<Ty> = m.params.iter().map(|p| self.world.resolve(&p.ty).unwrap_or(Ty::Error)).collect();
        self.check_args(name, &params, &argt, line);
        self.world.resolve(&m.ret).unwrap_or(Ty::Error)
    }

    fn static_call(&mut self, ty: &str, name: &str, args: &[(Ty, usize)], line: usize) -> Ty {
        match (ty, name) {
            ("Math", "min" | "max") => {
                if self.check_args(name, &[Ty::Float, Ty::Float], args, line) && args.iter().all(|(t, _)| *t == Ty::Int)
                {
                    return Ty::Int;
                }
                Ty::Float
            }
            ("Math", "abs") => {
                self.check_args(name, &[Ty::Float], args, line);
                match args.first() {
                    Some((Ty::Int, _)) => Ty::Int,
                    _ => Ty::Float,
                }
            }
            ("Date", "of") => {
                self.check_args(name, &[Ty::Int, Ty::Int, Ty::Int], args, line);
                Ty::Date
            }
            _ => {
                self.report(DiagnosticKind::UnresolvedSymbol, line, format!("cannot find method `{name}` in `{ty}`"));
                Ty::Error
            }
        }
    }

    fn builtin_method(&mut self, recv: &Ty, name: &str, args: &[(Ty, usize)], line: usize) -> Ty {
        let sig: Option<(Vec<Ty>, Ty)> = match (recv, name) {
            (Ty::List(t), "add") => Some((vec![(**t).clone()], Ty::Void)),
            (Ty::List(t), "get") => Some((vec![Ty::Int], (**t).clone())),
            (Ty::List(_), "size") | (Ty::EmptyList, "size") => Some((vec![], Ty::Int)),
            (Ty::List(t), "remove") => Some((vec![(**t).clone()], Ty::Bool)),
            (Ty::Str, "length") => Some((vec![], Ty::Int)),
            (Ty::Str, "concat") => Some((vec![Ty::Str], Ty::Str)),
            (Ty::Str, "contains") => Some((vec![Ty::Str], Ty::Bool)),
            (Ty::Date, "daysBetween") => Some((vec![Ty::Date], Ty::Int)),
            (Ty::Date, "addDays") => Some((vec![Ty::Int], Ty::Date)),
            (Ty::Date, "year") => Some((vec![], Ty::Int)),
            _ => None,
        };
        match sig {
            Some((params, ret)) => {
                self.check_args(name, &params, args, line);
                ret
            }
            None => {
                self.report(
                    DiagnosticKind::UnresolvedSymbol,
                    line,
                    format!("cannot find method `{name}` on type `{recv}`"),
                );
                Ty::Error
            }
        }
    }
}

pub(crate) fn block_returns(b: &Block) -> bool {
    b.stmts.iter().any(stmt_returns)
}

fn stmt_returns(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Return(_) | StmtKind::Raise { .. } => true,
        StmtKind::If { then, els: Some(els), .. } => {
            block_returns(then)
                && match els {
                    Else::Block(b) => block_returns(b),
                    Else::If(s) => stmt_returns(s),
                }
        }
        _ => false,
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Type-checks a set of units against each other. Diagnostics are sorted
/// by path, then line.
pub fn check_units(units: &[CheckUnit<'_>]) -> Vec<Diagnostic> {
    let world = World::new(units.iter().map(|u| u.program));
    let mut out = Vec::new();

    // Duplicate top-level names across all units.
    let mut seen: HashSet<&str> = HashSet::new();
    for u in units {
        for d in &u.program.decls {
            let (name, line) = match d {
                Decl::Class(c) => (c.name.as_str(), c.span.line),
                Decl::Enum(e) => (e.name.as_str(), e.span.line),
            };
            if !seen.insert(name) || STATIC_TYPES.contains(&name) || name == "List" {
                out.push(Diagnostic::new(
                    u.path,
                    u.text,
                    DiagnosticKind::Other,
                    line,
                    format!("type `{name}` is already defined"),
                ));
            }
        }
    }

    for u in units {
        let mut ck = Checker { world: &world, path: u.path, text: u.text, out: &mut out };
        for e in u.program.enums() {
            let mut lits = HashSet::new();
            for l in &e.literals {
                if !lits.insert(l) {
                    ck.report(DiagnosticKind::Other, e.span.line, format!("duplicate literal `{l}`"));
                }
            }
        }
        for c in u.program.classes() {
            ck.class_decl(c);
        }
        if !u.program.stmts.is_empty() {
            if !u.is_test {
                let line = u.program.stmts[0].span.line;
                ck.report(DiagnosticKind::Other, line, "statements are only allowed in test programs");
            }
            let mut ctx = Ctx { class: None, ret: None, scopes: vec![HashMap::new()] };
            for s in &u.program.stmts {
                ck.stmt(s, &mut ctx);
            }
        }
    }
    out.sort_by(|a, b| (a.path.as_str(), a.line).cmp(&(b.path.as_str(), b.line)));
    out.dedup();
    out
}
