use super::ast::*;
use super::lexer::{lex, Tok, Token};

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

const RESERVED: &[&str] = &[
    "abstract", "assert", "class", "else", "enum", "extends", "false", "field", "for", "if", "import", "in", "method",
    "new", "null", "raise", "return", "this", "true", "var", "while",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    /// Skips docstrings that are not in a docstring position.
    fn skip_docs(&mut self) {
        while matches!(self.toks[self.pos].tok, Tok::Doc(_)) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> &Tok {
        self.skip_docs();
        &self.toks[self.pos].tok
    }

    fn peek_at(&mut self, ahead: usize) -> &Tok {
        self.skip_docs();
        let mut idx = self.pos;
        let mut left = ahead;
        while left > 0 && idx + 1 < self.toks.len() {
            idx += 1;
            if !matches!(self.toks[idx].tok, Tok::Doc(_)) {
                left -= 1;
            }
        }
        &self.toks[idx].tok
    }

    fn span(&mut self) -> Span {
        self.skip_docs();
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        let mut i = self.pos.saturating_sub(1);
        while i > 0 && matches!(self.toks[i].tok, Tok::Doc(_)) {
            i -= 1;
        }
        self.toks[i].span
    }

    fn bump(&mut self) -> Token {
        self.skip_docs();
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&mut self, message: impl Into<String>) -> PResult<T> {
        let line = self.span().line;
        Err(ParseError { line, message: message.into() })
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Float(x) => format!("`{x}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Doc(_) => "docstring".into(),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn at_sym(&mut self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<Span> {
        if self.at_sym(s) {
            Ok(self.bump().span)
        } else {
            let found = Self::describe(&self.peek().clone());
            self.err(format!("expected `{s}`, found {found}"))
        }
    }

    fn at_kw(&mut self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.at_kw(kw) {
            Ok(self.bump().span)
        } else {
            let found = Self::describe(&self.peek().clone());
            self.err(format!("expected `{kw}`, found {found}"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", Self::describe(&other))),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        while self.at_kw("import") {
            let start = self.bump().span;
            let mut path = self.ident()?;
            while self.eat_sym(".") {
                path.push('.');
                path.push_str(&self.ident()?);
            }
            let end = self.expect_sym(";")?;
            prog.imports.push(Import { path, span: start.to(end) });
        }
        loop {
            if matches!(self.peek(), Tok::Eof) {
                break;
            }
            if self.at_kw("enum") {
                let d = self.enum_decl()?;
                prog.decls.push(Decl::Enum(d));
            } else if self.at_kw("class") || self.at_kw("abstract") {
                let d = self.class_decl()?;
                prog.decls.push(Decl::Class(d));
            } else if self.at_kw("import") {
                return self.err("imports must precede declarations");
            } else {
                break;
            }
        }
        while !matches!(self.peek(), Tok::Eof) {
            if self.at_kw("class") || self.at_kw("enum") || self.at_kw("abstract") {
                return self.err("declarations must precede statements");
            }
            let s = self.stmt()?;
            prog.stmts.push(s);
        }
        Ok(prog)
    }

    fn enum_decl(&mut self) -> PResult<EnumDecl> {
        let start = self.expect_kw("enum")?;
        let name = self.ident()?;
        self.expect_sym("{")?;
        let mut literals = Vec::new();
        while !self.at_sym("}") {
            literals.push(self.ident()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        let end = self.expect_sym("}")?;
        Ok(EnumDecl { name, literals, span: start.to(end) })
    }

    fn class_decl(&mut self) -> PResult<ClassDecl> {
        let start = self.span();
        let is_abstract = self.eat_kw("abstract");
        self.expect_kw("class")?;
        let name = self.ident()?;
        let super_name = if self.eat_kw("extends") { Some(self.ident()?) } else { None };
        self.expect_sym("{")?;
        let mut members = Vec::new();
        loop {
            // A docstring directly before `method` belongs to it.
            let doc = match &self.toks[self.pos].tok {
                Tok::Doc(text) => {
                    let mut text = text.clone();
                    let mut span = self.toks[self.pos].span;
                    self.pos += 1;
                    while let Tok::Doc(next) = &self.toks[self.pos].tok {
                        text = next.clone();
                        span = self.toks[self.pos].span;
                        self.pos += 1;
                    }
                    Some((text, span))
                }
                _ => None,
            };
            if self.at_sym("}") {
                break;
            }
            if self.at_kw("field") {
                members.push(Member::Field(self.field_decl()?));
            } else if self.at_kw("method") {
                members.push(Member::Method(self.method_decl(doc)?));
            } else {
                let found = Self::describe(&self.peek().clone());
                return self.err(format!("expected `field`, `method` or `}}`, found {found}"));
            }
        }
        let end = self.expect_sym("}")?;
        Ok(ClassDecl { name, is_abstract, super_name, members, span: start.to(end), close: end })
    }

    fn field_decl(&mut self) -> PResult<FieldDecl> {
        let start = self.expect_kw("field")?;
        let name = self.ident()?;
        self.expect_sym(":")?;
        let ty = self.ty()?;
        let init = if self.eat_sym("=") { Some(self.expr()?) } else { None };
        let end = self.expect_sym(";")?;
        Ok(FieldDecl { name, ty, init, span: start.to(end) })
    }

    fn method_decl(&mut self, doc: Option<(String, Span)>) -> PResult<MethodDecl> {
        let kw = self.expect_kw("method")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.eat_sym(")") {
            loop {
                let pname = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.ty()?;
                params.push(ParamDecl { name: pname, ty });
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        self.expect_sym(":")?;
        let ret = self.ty()?;
        let header = kw.to(self.prev_span());
        let body = self.block()?;
        let start = doc.as_ref().map_or(kw, |(_, s)| *s);
        Ok(MethodDecl { doc: doc.map(|(t, _)| t), name, params, ret, span: start.to(body.span), header, body })
    }

    fn ty(&mut self) -> PResult<Type> {
        let name = self.ident()?;
        Ok(match name.as_str() {
            "Int" => Type::Int,
            "Float" => Type::Float,
            "Bool" => Type::Bool,
            "String" => Type::Str,
            "Date" => Type::Date,
            "Void" => Type::Void,
            "List" => {
                self.expect_sym("<")?;
                let inner = self.ty()?;
                self.expect_sym(">")?;
                Type::List(Box::new(inner))
            }
            _ => Type::Named(name),
        })
    }

    fn block(&mut self) -> PResult<Block> {
        let start = self.expect_sym("{")?;
        let mut stmts = Vec::new();
        while !self.at_sym("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.err("expected `}` before end of input");
            }
            stmts.push(self.stmt()?);
        }
        let end = self.expect_sym("}")?;
        Ok(Block { stmts, span: start.to(end) })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = if self.eat_kw("var") {
            let name = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.ty()?;
            self.expect_sym("=")?;
            let init = self.expr()?;
            self.expect_sym(";")?;
            StmtKind::Var { name, ty, init }
        } else if self.at_kw("if") {
            return self.if_stmt();
        } else if self.eat_kw("while") {
            self.expect_sym("(")?;
            let cond = self.expr()?;
            self.expect_sym(")")?;
            let body = self.block()?;
            StmtKind::While { cond, body }
        } else if self.eat_kw("for") {
            self.expect_sym("(")?;
            let var = self.ident()?;
            self.expect_kw("in")?;
            let iter = self.expr()?;
            self.expect_sym(")")?;
            let body = self.block()?;
            StmtKind::ForEach { var, iter, body }
        } else if self.eat_kw("return") {
            let value = if self.at_sym(";") { None } else { Some(self.expr()?) };
            self.expect_sym(";")?;
            StmtKind::Return(value)
        } else if self.eat_kw("raise") {
            let kind = self.ident()?;
            self.expect_sym("(")?;
            let payload = self.expr()?;
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            StmtKind::Raise { kind, payload }
        } else if self.eat_kw("assert") {
            let e = self.expr()?;
            self.expect_sym(";")?;
            StmtKind::Assert(e)
        } else {
            let e = self.expr()?;
            if self.eat_sym("=") {
                if !matches!(e.kind, ExprKind::Name(_) | ExprKind::Field { .. }) {
                    return Err(ParseError {
                        line: e.span.line,
                        message: "left side of `=` must be a variable or field".into(),
                    });
                }
                let value = self.expr()?;
                self.expect_sym(";")?;
                StmtKind::Assign { target: e, value }
            } else {
                self.expect_sym(";")?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { kind, span: start.to(self.prev_span()) })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let start = self.expect_kw("if")?;
        self.expect_sym("(")?;
        let cond = self.expr()?;
        self.expect_sym(")")?;
        let then = self.block()?;
        let els = if self.eat_kw("else") {
            if self.at_kw("if") {
                Some(Else::If(Box::new(self.if_stmt()?)))
            } else {
                Some(Else::Block(self.block()?))
            }
        } else {
            None
        };
        Ok(Stmt { kind: StmtKind::If { cond, then, els }, span: start.to(self.prev_span()) })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&mut self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Sym("||") => BinOp::Or,
            Tok::Sym("&&") => BinOp::And,
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("+") => BinOp::Add,
            Tok::Sym("-") => BinOp::Sub,
            Tok::Sym("*") => BinOp::Mul,
            Tok::Sym("/") => BinOp::Div,
            Tok::Sym("%") => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let op = if self.eat_sym("!") {
            UnOp::Not
        } else if self.eat_sym("-") {
            UnOp::Neg
        } else {
            return self.postfix();
        };
        let operand = self.unary()?;
        let span = start.to(operand.span);
        Ok(Expr { kind: ExprKind::Unary { op, operand: Box::new(operand) }, span })
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.eat_sym(")") {
            loop {
                args.push(self.expr()?);
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        Ok(args)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat_sym(".") {
            let name = self.ident()?;
            if self.at_sym("(") {
                let args = self.args()?;
                let span = e.span.to(self.prev_span());
                e = Expr { kind: ExprKind::Call { recv: Some(Box::new(e)), name, args }, span };
            } else {
                let span = e.span.to(self.prev_span());
                e = Expr { kind: ExprKind::Field { obj: Box::new(e), name }, span };
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let tok = self.peek().clone();
        let kind = match tok {
            Tok::Int(n) => {
                self.bump();
                ExprKind::Int(n)
            }
            Tok::Float(x) => {
                self.bump();
                ExprKind::Float(x)
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::Sym("(") => {
                self.bump();
                let mut inner = self.expr()?;
                let end = self.expect_sym(")")?;
                inner.span = start.to(end);
                return Ok(inner);
            }
            Tok::Sym("[") => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat_sym("]") {
                    loop {
                        items.push(self.expr()?);
                        if self.eat_sym("]") {
                            break;
                        }
                        self.expect_sym(",")?;
                    }
                }
                ExprKind::List(items)
            }
            Tok::Ident(word) => match word.as_str() {
                "true" => {
                    self.bump();
                    ExprKind::Bool(true)
                }
                "false" => {
                    self.bump();
                    ExprKind::Bool(false)
                }
                "null" => {
                    self.bump();
                    ExprKind::Null
                }
                "this" => {
                    self.bump();
                    ExprKind::This
                }
                "new" => {
                    self.bump();
                    let class = self.ident()?;
                    self.expect_sym("(")?;
                    self.expect_sym(")")?;
                    ExprKind::New { class }
                }
                w if is_reserved(w) => return self.err(format!("unexpected keyword `{w}`")),
                _ => {
                    self.bump();
                    if matches!(self.peek_at(0), Tok::Sym("(")) {
                        let args = self.args()?;
                        ExprKind::Call { recv: None, name: word, args }
                    } else {
                        ExprKind::Name(word)
                    }
                }
            },
            other => return self.err(format!("expected expression, found {}", Self::describe(&other))),
        };
        Ok(Expr { kind, span: start.to(self.prev_span()) })
    }
}

/// Parses a MiniOO source file (library or test). An empty file yields an
/// empty program.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src).map_err(|e| ParseError { line: e.line, message: e.message })?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

/// Parses a single expression (used by tooling and tests).
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src).map_err(|e| ParseError { line: e.line, message: e.message })?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.err("trailing input after expression");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_class() {
        let p = parse_program("class A { }").unwrap();
        assert_eq!(p.decls.len(), 1);
        let c = p.class("A").unwrap();
        assert!(c.members.is_empty());
    }

    #[test]
    fn docstring_attaches_verbatim() {
        let src = "class A {\n  /**\n   * Does things.\n   */\n  method f(): Int {\n    return 1;\n  }\n}\n";
        let p = parse_program(src).unwrap();
        let m = p.class("A").unwrap().methods().next().unwrap();
        assert_eq!(m.doc.as_deref(), Some("/**\n   * Does things.\n   */"));
        assert_eq!(
            &src[m.span.start..m.span.end],
            "/**\n   * Does things.\n   */\n  method f(): Int {\n    return 1;\n  }"
        );
        assert_eq!(m.span.line, 2);
        assert_eq!(m.body.span.line, 5);
    }

    #[test]
    fn stray_brace_is_syntax_error() {
        let err = parse_program("class A { }\n}").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_program("class {").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn comments_and_field_docs_skipped() {
        let p = parse_program("// hi\nclass A {\n  /** cached */\n  field x: Int = 1; // trailing\n}\n").unwrap();
        assert_eq!(p.class("A").unwrap().fields().count(), 1);
    }

    #[test]
    fn precedence() {
        let e = parse_expr("1 + 2 * 3 == 7 && !false").unwrap();
        let ExprKind::Binary { op: BinOp::And, lhs, .. } = e.kind else { panic!() };
        let ExprKind::Binary { op: BinOp::Eq, lhs, .. } = lhs.kind else { panic!() };
        assert!(matches!(lhs.kind, ExprKind::Binary { op: BinOp::Add, .. }));
    }

    #[test]
    fn test_program_statements() {
        let p = parse_program("var x: Int = 7 / 2;\nassert x == 3;\n").unwrap();
        assert_eq!(p.stmts.len(), 2);
        assert!(parse_program("assert true; class A {}").is_err());
    }
}
