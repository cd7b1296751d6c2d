use std::fmt;

use serde::{Deserialize, Serialize};

use crate::decompose::MethodSpec;

/// A class model: the blueprint every later stage works from.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelPackage {
    pub name: String,
    pub classes: Vec<ClassDef>,
    pub enums: Vec<EnumDef>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EnumDef {
    pub name: String,
    pub literals: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ClassDef {
    pub name: String,
    pub is_abstract: bool,
    pub super_class: Option<String>,
    pub attributes: Vec<AttributeDef>,
    pub references: Vec<ReferenceDef>,
    pub operations: Vec<OperationDef>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeDef {
    pub name: String,
    pub ty: TypeRef,
    pub is_many: bool,
    pub default_value: Option<Literal>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceDef {
    pub name: String,
    pub target: String,
    pub is_many: bool,
    pub is_containment: bool,
    pub opposite: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: TypeRef,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperationDef {
    pub name: String,
    pub params: Vec<Param>,
    pub return_type: TypeRef,
    pub spec: Option<MethodSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeRef {
    Int,
    Float,
    Bool,
    String,
    Date,
    Void,
    Class(String),
    Enum(String),
    ListOf(Box<TypeRef>),
}

/// Attribute default values. Dates are stored as days since 1970-01-01.
#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Date(i64),
    EnumLiteral(String),
}

impl TypeRef {
    pub fn is_primitive(&self) -> bool {
        matches!(self, TypeRef::Int | TypeRef::Float | TypeRef::Bool | TypeRef::String | TypeRef::Date)
    }

    /// Number of nested `List<...>` wrappers.
    pub fn list_depth(&self) -> usize {
        match self {
            TypeRef::ListOf(inner) => 1 + inner.list_depth(),
            _ => 0,
        }
    }

    /// Innermost element type (self for non-list types).
    pub fn element(&self) -> &TypeRef {
        match self {
            TypeRef::ListOf(inner) => inner.element(),
            other => other,
        }
    }

    /// Class names mentioned anywhere in this type.
    pub fn class_name(&self) -> Option<&str> {
        match self.element() {
            TypeRef::Class(n) => Some(n),
            _ => None,
        }
    }

    fn contains_void(&self) -> bool {
        match self {
            TypeRef::Void => true,
            TypeRef::ListOf(inner) => inner.contains_void(),
            _ => false,
        }
    }

    pub(crate) fn void_nested(&self) -> bool {
        match self {
            TypeRef::ListOf(inner) => inner.contains_void(),
            _ => false,
        }
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Int => f.write_str("Int"),
            TypeRef::Float => f.write_str("Float"),
            TypeRef::Bool => f.write_str("Bool"),
            TypeRef::String => f.write_str("String"),
            TypeRef::Date => f.write_str("Date"),
            TypeRef::Void => f.write_str("Void"),
            TypeRef::Class(n) | TypeRef::Enum(n) => f.write_str(n),
            TypeRef::ListOf(inner) => write!(f, "List<{inner}>"),
        }
    }
}

/// Identifies one operation: `Class.op(arity)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpRef {
    pub class: String,
    pub name: String,
    pub arity: Option<usize>,
}

impl OpRef {
    pub fn new(class: impl Into<String>, name: impl Into<String>, arity: usize) -> Self {
        OpRef { class: class.into(), name: name.into(), arity: Some(arity) }
    }

    /// Parses `Class.op` or `Class.op(2)`.
    pub fn parse(text: &str) -> Option<OpRef> {
        let text = text.trim();
        let (head, arity) = match text.find('(') {
            Some(open) => {
                let close = text.rfind(')')?;
                if close < open || close != text.len() - 1 {
                    return None;
                }
                let inner = text[open + 1..close].trim();
                (&text[..open], Some(inner.parse().ok()?))
            }
            None => (text, None),
        };
        let (class, name) = head.split_once('.')?;
        let valid = |s: &str| {
            !s.is_empty()
                && s.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                && s.chars().all(|c| c.is_alphanumeric() || c == '_')
        };
        if !valid(class) || !valid(name) {
            return None;
        }
        Some(OpRef { class: class.to_string(), name: name.to_string(), arity })
    }
}

impl fmt::Display for OpRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arity {
            Some(a) => write!(f, "{}.{}({})", self.class, self.name, a),
            None => write!(f, "{}.{}", self.class, self.name),
        }
    }
}

impl ModelPackage {
    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn enum_def(&self, name: &str) -> Option<&EnumDef> {
        self.enums.iter().find(|e| e.name == name)
    }

    /// Superclass chain of `name`, nearest first. Stops on cycles.
    pub fn ancestors(&self, name: &str) -> Vec<&ClassDef> {
        let mut out: Vec<&ClassDef> = Vec::new();
        let mut cur = self.class(name).and_then(|c| c.super_class.as_deref());
        while let Some(s) = cur {
            if s == name || out.iter().any(|c| c.name == s) {
                break;
            }
            match self.class(s) {
                Some(c) => {
                    out.push(c);
                    cur = c.super_class.as_deref();
                }
                None => break,
            }
        }
        out
    }

    /// Every operation in declaration order, with its fully qualified reference.
    pub fn operations(&self) -> impl Iterator<Item = (OpRef, &ClassDef, &OperationDef)> {
        self.classes
            .iter()
            .flat_map(|c| c.operations.iter().map(move |op| (OpRef::new(&c.name, &op.name, op.params.len()), c, op)))
    }

    /// Resolves an operation reference; `None` when zero or several match.
    pub fn find_operation(&self, op: &OpRef) -> Option<(usize, usize)> {
        let ci = self.classes.iter().position(|c| c.name == op.class)?;
        let mut hits = self.classes[ci]
            .operations
            .iter()
            .enumerate()
            .filter(|(_, o)| o.name == op.name && op.arity.is_none_or(|a| a == o.params.len()));
        let (oi, _) = hits.next()?;
        if hits.next().is_some() {
            return None;
        }
        Some((ci, oi))
    }
}
