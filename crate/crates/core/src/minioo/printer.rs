//! Canonical MiniOO formatting: two-space indentation, one statement per
//! line, minimal parentheses.

use std::fmt::Write;

use super::ast::*;

const POSTFIX_PREC: u8 = 8;
const UNARY_PREC: u8 = 7;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for imp in &p.imports {
        let _ = writeln!(out, "import {};", imp.path);
    }
    let mut first = p.imports.is_empty();
    for d in &p.decls {
        if !first {
            out.push('\n');
        }
        first = false;
        match d {
            Decl::Enum(e) => print_enum(&mut out, e),
            Decl::Class(c) => print_class(&mut out, c),
        }
    }
    if !p.stmts.is_empty() && !first {
        out.push('\n');
    }
    for s in &p.stmts {
        print_stmt(&mut out, s, 0);
    }
    out
}

pub fn print_enum(out: &mut String, e: &EnumDecl) {
    let _ = writeln!(out, "enum {} {{ {} }}", e.name, e.literals.join(", "));
}

pub fn print_class(out: &mut String, c: &ClassDecl) {
    if c.is_abstract {
        out.push_str("abstract ");
    }
    let _ = write!(out, "class {}", c.name);
    if let Some(s) = &c.super_name {
        let _ = write!(out, " extends {s}");
    }
    out.push_str(" {\n");
    for (i, m) in c.members.iter().enumerate() {
        match m {
            Member::Field(f) => print_field(out, f),
            Member::Method(m) => {
                if i > 0 {
                    out.push('\n');
                }
                print_method(out, m, 1);
            }
        }
    }
    out.push_str("}\n");
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn print_field(out: &mut String, f: &FieldDecl) {
    let _ = write!(out, "  field {}: {}", f.name, f.ty);
    if let Some(init) = &f.init {
        out.push_str(" = ");
        out.push_str(&expr_to_string(init));
    }
    out.push_str(";\n");
}

/// `method name(a: T): R`, without body.
pub fn method_header(m: &MethodDecl) -> String {
    let params: Vec<String> = m.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
    format!("method {}({}): {}", m.name, params.join(", "), m.ret)
}

pub fn print_method(out: &mut String, m: &MethodDecl, level: usize) {
    if let Some(doc) = &m.doc {
        indent(out, level);
        out.push_str(doc);
        out.push('\n');
    }
    indent(out, level);
    out.push_str(&method_header(m));
    out.push(' ');
    print_block(out, &m.body, level);
    out.push('\n');
}

/// Prints `{ ... }` where the opening brace continues the current line and
/// the closing brace sits at `level`. No trailing newline.
pub fn print_block(out: &mut String, b: &Block, level: usize) {
    out.push_str("{\n");
    for s in &b.stmts {
        print_stmt(out, s, level + 1);
    }
    indent(out, level);
    out.push('}');
}

pub fn block_to_string(b: &Block, level: usize) -> String {
    let mut out = String::new();
    print_block(&mut out, b, level);
    out
}

pub fn print_stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    print_stmt_inline(out, s, level);
    out.push('\n');
}

fn print_stmt_inline(out: &mut String, s: &Stmt, level: usize) {
    match &s.kind {
        StmtKind::Var { name, ty, init } => {
            let _ = write!(out, "var {name}: {ty} = {};", expr_to_string(init));
        }
        StmtKind::Assign { target, value } => {
            let _ = write!(out, "{} = {};", expr_to_string(target), expr_to_string(value));
        }
        StmtKind::If { cond, then, els } => {
            let _ = write!(out, "if ({}) ", expr_to_string(cond));
            print_block(out, then, level);
            match els {
                None => {}
                Some(Else::Block(b)) => {
                    out.push_str(" else ");
                    print_block(out, b, level);
                }
                Some(Else::If(s)) => {
                    out.push_str(" else ");
                    print_stmt_inline(out, s, level);
                }
            }
        }
        StmtKind::While { cond, body } => {
            let _ = write!(out, "while ({}) ", expr_to_string(cond));
            print_block(out, body, level);
        }
        StmtKind::ForEach { var, iter, body } => {
            let _ = write!(out, "for ({var} in {}) ", expr_to_string(iter));
            print_block(out, body, level);
        }
        StmtKind::Return(None) => out.push_str("return;"),
        StmtKind::Return(Some(e)) => {
            let _ = write!(out, "return {};", expr_to_string(e));
        }
        StmtKind::Raise { kind, payload } => {
            let _ = write!(out, "raise {kind}({});", expr_to_string(payload));
        }
        StmtKind::Assert(e) => {
            let _ = write!(out, "assert {};", expr_to_string(e));
        }
        StmtKind::Expr(e) => {
            let _ = write!(out, "{};", expr_to_string(e));
        }
    }
}

pub fn quote_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => UNARY_PREC,
        _ => POSTFIX_PREC + 1,
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut out = String::new();
    print_expr(&mut out, e, 0);
    out
}

fn print_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let parens = prec(e) < min_prec;
    if parens {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Float(x) => {
            let _ = write!(out, "{x:?}");
        }
        ExprKind::Str(s) => out.push_str(&quote_str(s)),
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Null => out.push_str("null"),
        ExprKind::This => out.push_str("this"),
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::Field { obj, name } => {
            print_expr(out, obj, POSTFIX_PREC);
            out.push('.');
            out.push_str(name);
        }
        ExprKind::Call { recv, name, args } => {
            if let Some(r) = recv {
                print_expr(out, r, POSTFIX_PREC);
                out.push('.');
            }
            out.push_str(name);
            print_args(out, args);
        }
        ExprKind::New { class } => {
            let _ = write!(out, "new {class}()");
        }
        ExprKind::List(items) => {
            out.push('[');
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_expr(out, it, 0);
            }
            out.push(']');
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            print_expr(out, lhs, p);
            let _ = write!(out, " {} ", op.symbol());
            print_expr(out, rhs, p + 1);
        }
        ExprKind::Unary { op, operand } => {
            out.push(match op {
                UnOp::Not => '!',
                UnOp::Neg => '-',
            });
            print_expr(out, operand, UNARY_PREC);
        }
    }
    if parens {
        out.push(')');
    }
}

fn print_args(out: &mut String, args: &[Expr]) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        print_expr(out, a, 0);
    }
    out.push(')');
}
