//! MiniOO syntax tree.
//!
//! Every node carries a [`Span`]; spans compare equal unconditionally, so
//! the derived `PartialEq` on the tree is structural equality.

use std::fmt;

/// Byte range and 1-based line of a node in its source text.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: usize,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Span) -> bool {
        true
    }
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end, line: self.line }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Program {
    pub imports: Vec<Import>,
    pub decls: Vec<Decl>,
    /// Top-level statements; only test programs have them.
    pub stmts: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Import {
    pub path: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decl {
    Enum(EnumDecl),
    Class(ClassDecl),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumDecl {
    pub name: String,
    pub literals: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDecl {
    pub name: String,
    pub is_abstract: bool,
    pub super_name: Option<String>,
    pub members: Vec<Member>,
    pub span: Span,
    /// The closing `}`.
    pub close: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Member {
    Field(FieldDecl),
    Method(MethodDecl),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: Type,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodDecl {
    /// Full docstring text including the `/**` and `*/` delimiters.
    pub doc: Option<String>,
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub ret: Type,
    pub body: Block,
    /// From the docstring (or `method` keyword) to the closing brace.
    pub span: Span,
    /// Span of the `method` keyword through the return type.
    pub header: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Float,
    Bool,
    Str,
    Date,
    Void,
    Named(String),
    List(Box<Type>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    /// From `{` to `}` inclusive.
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Var { name: String, ty: Type, init: Expr },
    Assign { target: Expr, value: Expr },
    If { cond: Expr, then: Block, els: Option<Else> },
    While { cond: Expr, body: Block },
    ForEach { var: String, iter: Expr, body: Block },
    Return(Option<Expr>),
    Raise { kind: String, payload: Expr },
    Assert(Expr),
    Expr(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Else {
    Block(Block),
    If(Box<Stmt>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Null,
    This,
    Name(String),
    Field { obj: Box<Expr>, name: String },
    Call { recv: Option<Box<Expr>>, name: String, args: Vec<Expr> },
    New { class: String },
    List(Vec<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
}

pub const TRAP_KIND: &str = "Unsupported";
pub const TRAP_MESSAGE: &str = "not implemented";

impl BinOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("Int"),
            Type::Float => f.write_str("Float"),
            Type::Bool => f.write_str("Bool"),
            Type::Str => f.write_str("String"),
            Type::Date => f.write_str("Date"),
            Type::Void => f.write_str("Void"),
            Type::Named(n) => f.write_str(n),
            Type::List(inner) => write!(f, "List<{inner}>"),
        }
    }
}

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        Expr { kind, span: Span::default() }
    }
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt { kind, span: Span::default() }
    }

    /// The unsupported-operation trap, `raise Unsupported("not implemented");`.
    pub fn trap() -> Stmt {
        Stmt::new(StmtKind::Raise { kind: TRAP_KIND.into(), payload: Expr::new(ExprKind::Str(TRAP_MESSAGE.into())) })
    }
}

impl Block {
    pub fn trap() -> Block {
        Block { stmts: vec![Stmt::trap()], span: Span::default() }
    }

    /// True when the block is exactly the unsupported-operation trap.
    pub fn is_trap(&self) -> bool {
        matches!(
            self.stmts.as_slice(),
            [Stmt { kind: StmtKind::Raise { kind, .. }, .. }] if kind == TRAP_KIND
        )
    }
}

impl Program {
    pub fn classes(&self) -> impl Iterator<Item = &ClassDecl> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Class(c) => Some(c),
            Decl::Enum(_) => None,
        })
    }

    pub fn classes_mut(&mut self) -> impl Iterator<Item = &mut ClassDecl> {
        self.decls.iter_mut().filter_map(|d| match d {
            Decl::Class(c) => Some(c),
            Decl::Enum(_) => None,
        })
    }

    pub fn enums(&self) -> impl Iterator<Item = &EnumDecl> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Enum(e) => Some(e),
            Decl::Class(_) => None,
        })
    }

    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes().find(|c| c.name == name)
    }
}

impl ClassDecl {
    pub fn methods(&self) -> impl Iterator<Item = &MethodDecl> {
        self.members.iter().filter_map(|m| match m {
            Member::Method(m) => Some(m),
            Member::Field(_) => None,
        })
    }

    pub fn fields(&self) -> impl Iterator<Item = &FieldDecl> {
        self.members.iter().filter_map(|m| match m {
            Member::Field(f) => Some(f),
            Member::Method(_) => None,
        })
    }

    pub fn method(&self, name: &str, arity: usize) -> Option<&MethodDecl> {
        self.methods().find(|m| m.name == name && m.params.len() == arity)
    }
}
