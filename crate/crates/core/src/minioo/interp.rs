//! Tree-walking interpreter for checked MiniOO programs.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::ast::*;
use super::check::World;
use super::printer::expr_to_string;
use crate::dates;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;
const MAX_CALL_DEPTH: usize = 256;
const STACK_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(Rc<str>),
    /// Days since 1970-01-01.
    Date(i64),
    List(Rc<RefCell<Vec<Value>>>),
    Object(Rc<Object>),
    Enum(Rc<str>, Rc<str>),
    Null,
}

#[derive(Debug)]
pub struct Object {
    pub class: String,
    pub fields: RefCell<HashMap<String, Value>>,
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Int(n) => n.to_string(),
            Value::Float(x) => format!("{x:?}"),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => s.to_string(),
            Value::Date(d) => dates::format_iso(*d),
            Value::List(items) => {
                let parts: Vec<String> = items.borrow().iter().map(Value::render).collect();
                format!("[{}]", parts.join(", "))
            }
            Value::Object(o) => format!("<{}>", o.class),
            Value::Enum(_, lit) => lit.to_string(),
            Value::Null => "null".into(),
        }
    }

    fn loose_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => (*a as f64) == *b,
            (Value::Float(a), Value::Float(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Date(a), Value::Date(b)) => a == b,
            (Value::Enum(e1, a), Value::Enum(e2, b)) => e1 == e2 && a == b,
            (Value::Null, Value::Null) => true,
            (Value::List(a), Value::List(b)) => Rc::ptr_eq(a, b),
            (Value::Object(a), Value::Object(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Why a test stopped early.
#[derive(Debug)]
enum Fault {
    Raise(String, String),
    Assert(usize, String),
    Budget,
    Runtime(usize, String),
}

impl Fault {
    fn message(&self) -> String {
        match self {
            Fault::Raise(kind, msg) if kind == TRAP_KIND => format!("unsupported operation: {msg}"),
            Fault::Raise(kind, msg) => format!("uncaught {kind}: {msg}"),
            Fault::Assert(line, text) => format!("assertion failed at line {line}: {text}"),
            Fault::Budget => "step budget exceeded".into(),
            Fault::Runtime(line, msg) => format!("runtime error at line {line}: {msg}"),
        }
    }
}

enum Flow {
    Next,
    Return(Value),
}

type R<T> = Result<T, Fault>;

struct Frame {
    this: Option<Rc<Object>>,
    scopes: Vec<HashMap<String, Value>>,
}

impl Frame {
    fn lookup(&self, name: &str) -> Option<Value> {
        if let Some(v) = self.scopes.iter().rev().find_map(|s| s.get(name)) {
            return Some(v.clone());
        }
        self.this.as_ref().and_then(|o| o.fields.borrow().get(name).cloned())
    }

    fn is_value_name(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    /// Writes a local, falling back to a field of `this`. Returns false when
    /// neither exists.
    fn store(&mut self, name: &str, v: Value) -> bool {
        for s in self.scopes.iter_mut().rev() {
            if let Some(slot) = s.get_mut(name) {
                *slot = v;
                return true;
            }
        }
        if let Some(o) = &self.this {
            let mut fields = o.fields.borrow_mut();
            if let Some(slot) = fields.get_mut(name) {
                *slot = v;
                return true;
            }
        }
        false
    }
}

struct Interp<'a> {
    world: World<'a>,
    steps: u64,
    budget: u64,
    depth: usize,
}

impl<'a> Interp<'a> {
    fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(Fault::Budget)
        } else {
            Ok(())
        }
    }

    fn default_value(&self, t: &Type) -> Value {
        match t {
            Type::Int => Value::Int(0),
            Type::Float => Value::Float(0.0),
            Type::Bool => Value::Bool(false),
            Type::List(_) => Value::List(Rc::new(RefCell::new(Vec::new()))),
            Type::Named(n) => match self.world.enums.get(n.as_str()) {
                Some(e) => match e.literals.first() {
                    Some(l) => Value::Enum(e.name.as_str().into(), l.as_str().into()),
                    None => Value::Null,
                },
                None => Value::Null,
            },
            Type::Str | Type::Date | Type::Void => Value::Null,
        }
    }

    fn coerce(v: Value, t: &Type) -> Value {
        match (v, t) {
            (Value::Int(n), Type::Float) => Value::Float(n as f64),
            (v, _) => v,
        }
    }

    fn instantiate(&mut self, class: &str, line: usize) -> R<Value> {
        let mut chain = self.world.chain(class);
        if chain.is_empty() {
            return Err(Fault::Runtime(line, format!("unknown class `{class}`")));
        }
        chain.reverse();
        let obj = Rc::new(Object { class: class.to_string(), fields: RefCell::new(HashMap::new()) });
        for c in &chain {
            for f in c.fields() {
                let v = self.default_value(&f.ty);
                obj.fields.borrow_mut().insert(f.name.clone(), v);
            }
        }
        let mut frame = Frame { this: Some(obj.clone()), scopes: vec![HashMap::new()] };
        for c in &chain {
            for f in c.fields() {
                if let Some(init) = &f.init {
                    let v = Self::coerce(self.eval(init, &mut frame)?, &f.ty);
                    obj.fields.borrow_mut().insert(f.name.clone(), v);
                }
            }
        }
        Ok(Value::Object(obj))
    }

    fn invoke(&mut self, obj: Rc<Object>, name: &str, args: Vec<Value>, line: usize) -> R<Value> {
        let Some(m) = self.world.find_method(&obj.class, name) else {
            return Err(Fault::Runtime(line, format!("no method `{name}` on `{}`", obj.class)));
        };
        if m.params.len() != args.len() {
            return Err(Fault::Runtime(line, format!("arity mismatch calling `{name}`")));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Fault::Runtime(line, "call depth exceeded".into()));
        }
        let scope: HashMap<String, Value> =
            m.params.iter().zip(args).map(|(p, v)| (p.name.clone(), Self::coerce(v, &p.ty))).collect();
        let mut frame = Frame { this: Some(obj), scopes: vec![scope] };
        self.depth += 1;
        let flow = self.block(&m.body, &mut frame);
        self.depth -= 1;
        Ok(match flow? {
            Flow::Return(v) => Self::coerce(v, &m.ret),
            Flow::Next => Value::Null,
        })
    }

    fn block(&mut self, b: &Block, frame: &mut Frame) -> R<Flow> {
        frame.scopes.push(HashMap::new());
        let mut out = Ok(Flow::Next);
        for s in &b.stmts {
            match self.stmt(s, frame) {
                Ok(Flow::Next) => {}
                other => {
                    out = other;
                    break;
                }
            }
        }
        frame.scopes.pop();
        out
    }

    fn truthy(&mut self, e: &Expr, frame: &mut Frame) -> R<bool> {
        match self.eval(e, frame)? {
            Value::Bool(b) => Ok(b),
            other => Err(Fault::Runtime(e.span.line, format!("expected Bool, found {}", other.render()))),
        }
    }

    fn stmt(&mut self, s: &Stmt, frame: &mut Frame) -> R<Flow> {
        self.tick()?;
        let line = s.span.line;
        match &s.kind {
            StmtKind::Var { name, ty, init } => {
                let v = Self::coerce(self.eval(init, frame)?, ty);
                frame.scopes.last_mut().expect("scope").insert(name.clone(), v);
            }
            StmtKind::Assign { target, value } => match &target.kind {
                ExprKind::Name(n) => {
                    let v = self.eval(value, frame)?;
                    let v = match frame.lookup(n) {
                        Some(Value::Float(_)) => Self::coerce(v, &Type::Float),
                        _ => v,
                    };
                    if !frame.store(n, v) {
                        return Err(Fault::Runtime(line, format!("unknown variable `{n}`")));
                    }
                }
                ExprKind::Field { obj, name } => {
                    let o = self.eval(obj, frame)?;
                    let v = self.eval(value, frame)?;
                    let Value::Object(o) = o else {
                        return Err(Fault::Runtime(line, format!("null dereference writing `{name}`")));
                    };
                    let mut fields = o.fields.borrow_mut();
                    match fields.get_mut(name) {
                        Some(slot) => {
                            let v = match slot {
                                Value::Float(_) => Self::coerce(v, &Type::Float),
                                _ => v,
                            };
                            *slot = v;
                        }
                        None => return Err(Fault::Runtime(line, format!("unknown field `{name}`"))),
                    }
                }
                _ => return Err(Fault::Runtime(line, "invalid assignment target".into())),
            },
            StmtKind::If { cond, then, els } => {
                if self.truthy(cond, frame)? {
                    return self.block(then, frame);
                }
                match els {
                    Some(Else::Block(b)) => return self.block(b, frame),
                    Some(Else::If(s)) => return self.stmt(s, frame),
                    None => {}
                }
            }
            StmtKind::While { cond, body } => {
                while self.truthy(cond, frame)? {
                    self.tick()?;
                    if let Flow::Return(v) = self.block(body, frame)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::ForEach { var, iter, body } => {
                let items = match self.eval(iter, frame)? {
                    Value::List(l) => l.borrow().clone(),
                    Value::Null => return Err(Fault::Runtime(line, "null dereference in for-each".into())),
                    other => return Err(Fault::Runtime(line, format!("cannot iterate {}", other.render()))),
                };
                for it in items {
                    self.tick()?;
                    frame.scopes.push(HashMap::from([(var.clone(), it)]));
                    let flow = self.block(body, frame);
                    frame.scopes.pop();
                    if let Flow::Return(v) = flow? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::Return(None) => return Ok(Flow::Return(Value::Null)),
            StmtKind::Return(Some(e)) => return Ok(Flow::Return(self.eval(e, frame)?)),
            StmtKind::Raise { kind, payload } => {
                let msg = self.eval(payload, frame)?.render();
                return Err(Fault::Raise(kind.clone(), msg));
            }
            StmtKind::Assert(e) => {
                if !self.truthy(e, frame)? {
                    return Err(Fault::Assert(line, expr_to_string(e)));
                }
            }
            StmtKind::Expr(e) => {
                self.eval(e, frame)?;
            }
        }
        Ok(Flow::Next)
    }

    fn eval(&mut self, e: &Expr, frame: &mut Frame) -> R<Value> {
        self.tick()?;
        let line = e.span.line;
        Ok(match &e.kind {
            ExprKind::Int(n) => Value::Int(*n),
            ExprKind::Float(x) => Value::Float(*x),
            ExprKind::Str(s) => Value::Str(s.as_str().into()),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Null => Value::Null,
            ExprKind::This => match &frame.this {
                Some(o) => Value::Object(o.clone()),
                None => return Err(Fault::Runtime(line, "`this` outside a method".into())),
            },
            ExprKind::Name(n) => match frame.lookup(n) {
                Some(v) => v,
                None => return Err(Fault::Runtime(line, format!("unknown name `{n}`"))),
            },
            ExprKind::Field { obj, name } => {
                if let ExprKind::Name(n) = &obj.kind {
                    if !frame.is_value_name(n) {
                        if let Some(en) = self.world.enums.get(n.as_str()) {
                            return Ok(Value::Enum(en.name.as_str().into(), name.as_str().into()));
                        }
                    }
                }
                match self.eval(obj, frame)? {
                    Value::Object(o) => match o.fields.borrow().get(name) {
                        Some(v) => v.clone(),
                        None => return Err(Fault::Runtime(line, format!("unknown field `{name}`"))),
                    },
                    _ => return Err(Fault::Runtime(line, format!("null dereference reading `{name}`"))),
                }
            }
            ExprKind::Call { recv, name, args } => return self.call(recv.as_deref(), name, args, line, frame),
            ExprKind::New { class } => return self.instantiate(class, line),
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    out.push(self.eval(it, frame)?);
                }
                Value::List(Rc::new(RefCell::new(out)))
            }
            ExprKind::Unary { op, operand } => match (op, self.eval(operand, frame)?) {
                (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                (UnOp::Neg, Value::Int(n)) => match n.checked_neg() {
                    Some(v) => Value::Int(v),
                    None => return Err(Fault::Runtime(line, "integer overflow".into())),
                },
                (UnOp::Neg, Value::Float(x)) => Value::Float(-x),
                (_, v) => return Err(Fault::Runtime(line, format!("bad operand {}", v.render()))),
            },
            ExprKind::Binary { op: BinOp::And, lhs, rhs } => {
                Value::Bool(self.truthy(lhs, frame)? && self.truthy(rhs, frame)?)
            }
            ExprKind::Binary { op: BinOp::Or, lhs, rhs } => {
                Value::Bool(self.truthy(lhs, frame)? || self.truthy(rhs, frame)?)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.eval(lhs, frame)?;
                let b = self.eval(rhs, frame)?;
                binary(*op, a, b).map_err(|m| Fault::Runtime(line, m))?
            }
        })
    }

    fn call(&mut self, recv: Option<&Expr>, name: &str, args: &[Expr], line: usize, frame: &mut Frame) -> R<Value> {
        let static_recv = match recv {
            Some(Expr { kind: ExprKind::Name(n), .. }) if !frame.is_value_name(n) && (n == "Math" || n == "Date") => {
                Some(n.as_str())
            }
            _ => None,
        };
        let target = match (recv, static_recv) {
            (_, Some(_)) => None,
            (Some(r), None) => Some(self.eval(r, frame)?),
            (None, None) => match &frame.this {
                Some(o) => Some(Value::Object(o.clone())),
                None => return Err(Fault::Runtime(line, format!("unknown function `{name}`"))),
            },
        };
        let mut argv = Vec::with_capacity(args.len());
        for a in args {
            argv.push(self.eval(a, frame)?);
        }
        let fault = |m: String| Fault::Runtime(line, m);
        match (static_recv, target) {
            (Some(ty), _) => static_call(ty, name, &argv).map_err(fault),
            (None, Some(Value::Object(o))) => self.invoke(o, name, argv, line),
            (None, Some(Value::Null)) => Err(fault(format!("null dereference calling `{name}`"))),
            (None, Some(v)) => builtin_method(&v, name, argv).map_err(|m| match m {
                BuiltinError::Raise(msg) => Fault::Raise("IndexError".into(), msg),
                BuiltinError::Runtime(msg) => fault(msg),
            }),
            (None, None) => unreachable!("receiver resolved above"),
        }
    }
}

enum BuiltinError {
    Raise(String),
    Runtime(String),
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Int(n) => Some(*n as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

fn binary(op: BinOp, a: Value, b: Value) -> Result<Value, String> {
    use BinOp::*;
    let overflow = || "integer overflow".to_string();
    match (op, &a, &b) {
        (Eq, _, _) => return Ok(Value::Bool(a.loose_eq(&b))),
        (Ne, _, _) => return Ok(Value::Bool(!a.loose_eq(&b))),
        (Add, Value::Str(_), _) | (Add, _, Value::Str(_)) => {
            return Ok(Value::Str(format!("{}{}", a.render(), b.render()).into()))
        }
        (_, Value::Int(x), Value::Int(y)) => {
            let (x, y) = (*x, *y);
            return Ok(match op {
                Add => Value::Int(x.checked_add(y).ok_or_else(overflow)?),
                Sub => Value::Int(x.checked_sub(y).ok_or_else(overflow)?),
                Mul => Value::Int(x.checked_mul(y).ok_or_else(overflow)?),
                Div | Rem if y == 0 => return Err("division by zero".into()),
                Div => Value::Int(x.checked_div(y).ok_or_else(overflow)?),
                Rem => Value::Int(x.checked_rem(y).ok_or_else(overflow)?),
                Lt => Value::Bool(x < y),
                Le => Value::Bool(x <= y),
                Gt => Value::Bool(x > y),
                Ge => Value::Bool(x >= y),
                And | Or | Eq | Ne => unreachable!("handled separately"),
            });
        }
        _ => {}
    }
    let ordering = match (&a, &b) {
        (Value::Date(x), Value::Date(y)) => Some(x.cmp(y)),
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        _ => None,
    };
    if let Some(ord) = ordering {
        return match op {
            Lt => Ok(Value::Bool(ord.is_lt())),
            Le => Ok(Value::Bool(ord.is_le())),
            Gt => Ok(Value::Bool(ord.is_gt())),
            Ge => Ok(Value::Bool(ord.is_ge())),
            _ => Err(format!("operator `{}` not defined here", op.symbol())),
        };
    }
    let (Some(x), Some(y)) = (num(&a), num(&b)) else {
        return Err(format!("operator `{}` cannot be applied to {} and {}", op.symbol(), a.render(), b.render()));
    };
    Ok(match op {
        Add => Value::Float(x + y),
        Sub => Value::Float(x - y),
        Mul => Value::Float(x * y),
        Div => Value::Float(x / y),
        Rem => Value::Float(x % y),
        Lt => Value::Bool(x < y),
        Le => Value::Bool(x <= y),
        Gt => Value::Bool(x > y),
        Ge => Value::Bool(x >= y),
        And | Or | Eq | Ne => unreachable!("handled separately"),
    })
}

fn static_call(ty: &str, name: &str, args: &[Value]) -> Result<Value, String> {
    match (ty, name, args) {
        ("Math", "min" | "max", [Value::Int(a), Value::Int(b)]) => {
            Ok(Value::Int(if name == "min" { *a.min(b) } else { *a.max(b) }))
        }
        ("Math", "min" | "max", [a, b]) => {
            let (Some(x), Some(y)) = (num(a), num(b)) else {
                return Err(format!("Math.{name} expects numbers"));
            };
            Ok(Value::Float(if name == "min" { x.min(y) } else { x.max(y) }))
        }
        ("Math", "abs", [Value::Int(a)]) => a.checked_abs().map(Value::Int).ok_or_else(|| "integer overflow".into()),
        ("Math", "abs", [Value::Float(x)]) => Ok(Value::Float(x.abs())),
        ("Date", "of", [Value::Int(y), Value::Int(m), Value::Int(d)]) => u32::try_from(*m)
            .ok()
            .zip(u32::try_from(*d).ok())
            .and_then(|(mm, dd)| dates::from_ymd(*y, mm, dd))
            .map(Value::Date)
            .ok_or_else(|| format!("invalid date {y}-{m}-{d}")),
        _ => Err(format!("unknown function `{ty}.{name}`")),
    }
}

fn builtin_method(recv: &Value, name: &str, args: Vec<Value>) -> Result<Value, BuiltinError> {
    let rt = BuiltinError::Runtime;
    match (recv, name, args.as_slice()) {
        (Value::List(l), "add", [v]) => {
            l.borrow_mut().push(v.clone());
            Ok(Value::Null)
        }
        (Value::List(l), "get", [Value::Int(i)]) => {
            let items = l.borrow();
            usize::try_from(*i)
                .ok()
                .and_then(|i| items.get(i).cloned())
                .ok_or_else(|| BuiltinError::Raise(format!("index {i} out of bounds for length {}", items.len())))
        }
        (Value::List(l), "size", []) => Ok(Value::Int(l.borrow().len() as i64)),
        (Value::List(l), "remove", [v]) => {
            let mut items = l.borrow_mut();
            match items.iter().position(|x| x.loose_eq(v)) {
                Some(i) => {
                    items.remove(i);
                    Ok(Value::Bool(true))
                }
                None => Ok(Value::Bool(false)),
            }
        }
        (Value::Str(s), "length", []) => Ok(Value::Int(s.chars().count() as i64)),
        (Value::Str(s), "concat", [o]) => Ok(Value::Str(format!("{s}{}", o.render()).into())),
        (Value::Str(s), "contains", [Value::Str(o)]) => Ok(Value::Bool(s.contains(&**o))),
        (Value::Str(_), "contains", [Value::Null]) => Err(rt("null argument to contains".into())),
        (Value::Date(d), "daysBetween", [Value::Date(o)]) => Ok(Value::Int(o - d)),
        (Value::Date(_), "daysBetween", [Value::Null]) => Err(rt("null argument to daysBetween".into())),
        (Value::Date(d), "addDays", [Value::Int(n)]) => {
            d.checked_add(*n).map(Value::Date).ok_or_else(|| rt("date overflow".into()))
        }
        (Value::Date(d), "year", []) => Ok(Value::Int(dates::civil_from_days(*d).0)),
        _ => Err(rt(format!("no method `{name}` on {}", recv.render()))),
    }
}

/// Runs a checked test program against checked library programs. Returns
/// the failure message when the test does not complete cleanly.
pub fn run_test(units: &[&Program], test: &Program, budget: u64) -> Result<(), String> {
    std::thread::scope(|scope| {
        std::thread::Builder::new()
            .stack_size(STACK_BYTES)
            .spawn_scoped(scope, || {
                let world = World::new(units.iter().copied().chain(std::iter::once(test)));
                let mut interp = Interp { world, steps: 0, budget, depth: 0 };
                let mut frame = Frame { this: None, scopes: vec![HashMap::new()] };
                for s in &test.stmts {
                    match interp.stmt(s, &mut frame) {
                        Ok(Flow::Next) => {}
                        Ok(Flow::Return(_)) => break,
                        Err(f) => return Err(f.message()),
                    }
                }
                Ok(())
            })
            .map_err(|e| format!("cannot start interpreter thread: {e}"))?
            .join()
            .unwrap_or_else(|_| Err("interpreter crashed".into()))
    })
}
