use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::types::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    DuplicateName,
    UnresolvedType,
    CyclicInheritance,
    DuplicateFeature,
    OppositeAsymmetry,
    ContainmentOnBothEnds,
    InvalidDefault,
    DefaultOnMany,
    DuplicateParameter,
    DuplicateOperation,
    ListTooDeep,
    VoidMisuse,
    AttributeNotDataType,
    DuplicateLiteral,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Dotted path to the offending element, e.g. `Airline.flights`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.location, self.message)
    }
}

struct Checker<'m> {
    m: &'m ModelPackage,
    out: Vec<Violation>,
    classes: HashSet<&'m str>,
    enums: HashSet<&'m str>,
    /// Classes that sit on or lead into an inheritance cycle.
    in_cycle: HashSet<&'m str>,
}

impl<'m> Checker<'m> {
    fn push(&mut self, kind: ViolationKind, location: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation { kind, location: location.into(), message: message.into() });
    }

    fn names(&mut self) {
        let mut seen = HashSet::new();
        let all = self.m.classes.iter().map(|c| c.name.as_str()).chain(self.m.enums.iter().map(|e| e.name.as_str()));
        let mut dups = Vec::new();
        for name in all {
            if !seen.insert(name) {
                dups.push(name);
            }
        }
        for d in dups {
            self.push(ViolationKind::DuplicateName, d, format!("`{d}` is declared more than once"));
        }
        for e in &self.m.enums {
            let mut lits = HashSet::new();
            for l in &e.literals {
                if !lits.insert(l) {
                    self.push(
                        ViolationKind::DuplicateLiteral,
                        format!("{}.{}", e.name, l),
                        format!("literal `{l}` repeated"),
                    );
                }
            }
        }
    }

    fn inheritance(&mut self) {
        let m = self.m;
        let mut reported: HashSet<&str> = HashSet::new();
        for c in &m.classes {
            if let Some(s) = &c.super_class {
                if !self.classes.contains(s.as_str()) {
                    self.push(ViolationKind::UnresolvedType, &c.name, format!("superclass `{s}` is not declared"));
                }
            }
            // Walk the chain; a revisit means a cycle.
            let mut path: Vec<&str> = vec![&c.name];
            let mut cur = c.super_class.as_deref();
            while let Some(s) = cur {
                if let Some(pos) = path.iter().position(|p| *p == s) {
                    self.in_cycle.insert(&c.name);
                    let cycle: Vec<&str> = path[pos..].to_vec();
                    if cycle.iter().all(|n| !reported.contains(n)) {
                        reported.extend(cycle.iter().copied());
                        let mut shown = cycle.clone();
                        shown.push(s);
                        self.push(
                            ViolationKind::CyclicInheritance,
                            cycle[0],
                            format!("inheritance cycle {}", shown.join(" -> ")),
                        );
                    }
                    break;
                }
                path.push(s);
                cur = m.class(s).and_then(|x| x.super_class.as_deref());
            }
        }
    }

    fn check_type(&mut self, ty: &TypeRef, location: &str, allow_void: bool) {
        if ty.list_depth() > 2 {
            self.push(ViolationKind::ListTooDeep, location, format!("`{ty}` nests lists deeper than 2"));
        }
        if (*ty == TypeRef::Void && !allow_void) || ty.void_nested() {
            self.push(ViolationKind::VoidMisuse, location, "Void is only allowed as a return type");
        }
        match ty.element() {
            TypeRef::Class(n) if !self.classes.contains(n.as_str()) => {
                self.push(ViolationKind::UnresolvedType, location, format!("class `{n}` is not declared"))
            }
            TypeRef::Enum(n) if !self.enums.contains(n.as_str()) => {
                self.push(ViolationKind::UnresolvedType, location, format!("enum `{n}` is not declared"))
            }
            _ => {}
        }
    }

    fn default_ok(&self, ty: &TypeRef, lit: &Literal) -> bool {
        match (ty, lit) {
            (TypeRef::Int, Literal::Int(_)) => true,
            (TypeRef::Float, Literal::Int(_) | Literal::Float(_)) => true,
            (TypeRef::Bool, Literal::Bool(_)) => true,
            (TypeRef::String, Literal::Str(_)) => true,
            (TypeRef::Date, Literal::Date(_)) => true,
            (TypeRef::Enum(e), Literal::EnumLiteral(l)) => {
                self.m.enum_def(e).is_some_and(|d| d.literals.iter().any(|x| x == l))
            }
            _ => false,
        }
    }

    /// Feature names of a class's ancestors (cycle-free chains only).
    fn inherited_features(&self, c: &ClassDef) -> HashSet<&'m str> {
        let mut out = HashSet::new();
        for a in self.m.ancestors(&c.name) {
            out.extend(a.attributes.iter().map(|x| x.name.as_str()));
            out.extend(a.references.iter().map(|x| x.name.as_str()));
        }
        out
    }

    fn features(&mut self) {
        let m = self.m;
        for c in &m.classes {
            let inherited =
                if self.in_cycle.contains(c.name.as_str()) { HashSet::new() } else { self.inherited_features(c) };
            let mut own: HashSet<&str> = HashSet::new();
            let names =
                c.attributes.iter().map(|a| a.name.as_str()).chain(c.references.iter().map(|r| r.name.as_str()));
            for n in names {
                if !own.insert(n) || inherited.contains(n) {
                    self.push(
                        ViolationKind::DuplicateFeature,
                        format!("{}.{}", c.name, n),
                        format!("feature `{n}` is declared more than once in `{}` or its superclasses", c.name),
                    );
                }
            }

            for a in &c.attributes {
                let loc = format!("{}.{}", c.name, a.name);
                self.check_type(&a.ty, &loc, false);
                if !(a.ty.is_primitive() || matches!(a.ty, TypeRef::Enum(_))) {
                    self.push(
                        ViolationKind::AttributeNotDataType,
                        &loc,
                        format!("attribute type `{}` must be a primitive or enum (use a reference)", a.ty),
                    );
                }
                if let Some(d) = &a.default_value {
                    if a.is_many {
                        self.push(ViolationKind::DefaultOnMany, &loc, "many-valued attribute cannot have a default");
                    } else if !self.default_ok(&a.ty, d) {
                        self.push(
                            ViolationKind::InvalidDefault,
                            &loc,
                            format!("default {d:?} does not fit type `{}`", a.ty),
                        );
                    }
                }
            }

            for r in &c.references {
                let loc = format!("{}.{}", c.name, r.name);
                if !self.classes.contains(r.target.as_str()) {
                    self.push(ViolationKind::UnresolvedType, &loc, format!("class `{}` is not declared", r.target));
                    continue;
                }
                if let Some(opp) = &r.opposite {
                    self.opposite(c, r, opp, &loc);
                }
            }

            let mut ops = HashSet::new();
            for op in &c.operations {
                let loc = format!("{}.{}", c.name, op.name);
                if !ops.insert((op.name.as_str(), op.params.len())) {
                    self.push(
                        ViolationKind::DuplicateOperation,
                        &loc,
                        format!("operation `{}` with {} parameter(s) declared twice", op.name, op.params.len()),
                    );
                }
                let mut params = HashSet::new();
                for p in &op.params {
                    if !params.insert(p.name.as_str()) {
                        self.push(
                            ViolationKind::DuplicateParameter,
                            format!("{loc}.{}", p.name),
                            format!("parameter `{}` repeated", p.name),
                        );
                    }
                    self.check_type(&p.ty, &format!("{loc}.{}", p.name), false);
                }
                self.check_type(&op.return_type, &loc, true);
            }
        }
    }

    fn find_reference(&self, class: &str, name: &str) -> Option<(&'m ClassDef, &'m ReferenceDef)> {
        let m = self.m;
        let own = m.class(class)?;
        std::iter::once(own)
            .chain(if self.in_cycle.contains(class) { vec![] } else { m.ancestors(class) })
            .find_map(|c| c.references.iter().find(|r| r.name == name).map(|r| (c, r)))
    }

    fn opposite(&mut self, owner: &'m ClassDef, r: &'m ReferenceDef, opp: &str, loc: &str) {
        let Some((_, back)) = self.find_reference(&r.target, opp) else {
            self.push(
                ViolationKind::OppositeAsymmetry,
                loc,
                format!("opposite `{opp}` is not a reference of `{}`", r.target),
            );
            return;
        };
        let points_back = back.opposite.as_deref() == Some(r.name.as_str());
        let targets_owner = back.target == owner.name
            || (!self.in_cycle.contains(owner.name.as_str())
                && self.m.ancestors(&owner.name).iter().any(|a| a.name == back.target));
        if !points_back || !targets_owner {
            self.push(
                ViolationKind::OppositeAsymmetry,
                loc,
                format!("`{}.{opp}` does not point back to `{}.{}`", r.target, owner.name, r.name),
            );
        } else if r.is_containment && back.is_containment {
            // report the pair once
            if (owner.name.as_str(), r.name.as_str()) < (r.target.as_str(), opp) {
                self.push(
                    ViolationKind::ContainmentOnBothEnds,
                    loc,
                    format!("`{}` and its opposite `{opp}` are both containments", r.name),
                );
            }
        }
    }
}

/// Checks every structural invariant of the model. Violations are data; an
/// empty list means the model is valid.
pub fn validate_model(m: &ModelPackage) -> Vec<Violation> {
    let mut ck = Checker {
        m,
        out: Vec::new(),
        classes: m.classes.iter().map(|c| c.name.as_str()).collect(),
        enums: m.enums.iter().map(|e| e.name.as_str()).collect(),
        in_cycle: HashSet::new(),
    };
    ck.names();
    ck.inheritance();
    ck.features();
    ck.out
}

/// Counts violations by kind; convenient in reports.
pub fn tally(violations: &[Violation]) -> HashMap<ViolationKind, usize> {
    let mut out = HashMap::new();
    for v in violations {
        *out.entry(v.kind).or_insert(0) += 1;
    }
    out
}
