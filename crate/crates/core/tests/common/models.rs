//! Generators for valid-by-construction class models.

use proptest::prelude::*;

use hybridgen::decompose::{InputSpec, MethodSpec};
use hybridgen::model::{
    AttributeDef, ClassDef, EnumDef, Literal, ModelPackage, OperationDef, Param, ReferenceDef, TypeRef,
};

/// Text without quotes or backslashes; the escaping path has its own unit test.
fn prose() -> impl Strategy<Value = String> {
    "[a-z][a-z ,.()<>=0-9]{0,24}[a-z]"
}

fn spec() -> impl Strategy<Value = MethodSpec> {
    (
        prose(),
        prose(),
        prop::collection::vec((r"[a-z]{1,6}", prose()), 0..3),
        prose(),
        prop::collection::vec(prose(), 0..3),
        prop::collection::vec(prose(), 0..3),
    )
        .prop_map(|(summary, algorithm, inputs, output, preconditions, postconditions)| MethodSpec {
            summary,
            algorithm,
            inputs: inputs.into_iter().map(|(name, description)| InputSpec { name, description }).collect(),
            output,
            preconditions,
            postconditions,
        })
}

/// Parameter type codes, return type code (9 is Void) and an optional spec.
type OpShape = (Vec<u8>, u8, Option<MethodSpec>);

#[derive(Clone, Debug)]
pub struct Shape {
    classes: usize,
    enums: Vec<usize>,
    supers: Vec<Option<usize>>,
    abstracts: Vec<bool>,
    attrs: Vec<Vec<(u8, bool, Option<i64>)>>,
    refs: Vec<Vec<(usize, bool, bool)>>,
    opposites: Vec<(usize, usize, bool, bool)>,
    ops: Vec<Vec<OpShape>>,
}

pub fn shape() -> impl Strategy<Value = Shape> {
    (1usize..7, prop::collection::vec(1usize..4, 0..3)).prop_flat_map(|(n, enums)| {
        (
            Just(n),
            Just(enums),
            prop::collection::vec(prop::option::of(0usize..n), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(
                prop::collection::vec((0u8..8, any::<bool>(), prop::option::of(-50i64..50)), 0..4),
                n,
            ),
            prop::collection::vec(prop::collection::vec((0usize..n, any::<bool>(), any::<bool>()), 0..3), n),
            prop::collection::vec((0usize..n, 0usize..n, any::<bool>(), any::<bool>()), 0..3),
            prop::collection::vec(
                prop::collection::vec((prop::collection::vec(0u8..9, 0..3), 0u8..10, prop::option::of(spec())), 0..3),
                n,
            ),
        )
            .prop_map(|(classes, enums, supers, abstracts, attrs, refs, opposites, ops)| Shape {
                classes,
                enums,
                supers,
                abstracts,
                attrs,
                refs,
                opposites,
                ops,
            })
    })
}

fn data_type(code: u8, enums: &[EnumDef]) -> TypeRef {
    match code {
        0 => TypeRef::Int,
        1 => TypeRef::Float,
        2 => TypeRef::Bool,
        3 => TypeRef::String,
        4 => TypeRef::Date,
        _ if !enums.is_empty() => TypeRef::Enum(enums[code as usize % enums.len()].name.clone()),
        _ => TypeRef::Int,
    }
}

fn default_for(ty: &TypeRef, seed: i64, enums: &[EnumDef]) -> Literal {
    match ty {
        TypeRef::Int => Literal::Int(seed),
        // Quarters print and parse back exactly.
        TypeRef::Float => Literal::Float(seed as f64 / 4.0),
        TypeRef::Bool => Literal::Bool(seed % 2 == 0),
        TypeRef::String => Literal::Str(format!("s{}", seed.abs())),
        TypeRef::Date => Literal::Date(18000 + seed * 37),
        TypeRef::Enum(e) => {
            let d = enums.iter().find(|x| &x.name == e).unwrap();
            Literal::EnumLiteral(d.literals[seed.unsigned_abs() as usize % d.literals.len()].clone())
        }
        _ => unreachable!(),
    }
}

fn param_type(code: u8, classes: usize, enums: &[EnumDef]) -> TypeRef {
    match code {
        0..=5 => data_type(code, enums),
        6 => TypeRef::Class(format!("C{}", code as usize % classes)),
        7 => TypeRef::ListOf(Box::new(TypeRef::Int)),
        _ => TypeRef::ListOf(Box::new(TypeRef::ListOf(Box::new(TypeRef::Class("C0".into()))))),
    }
}

/// Builds a model that is valid by construction: superclasses point to
/// lower indices, feature names are unique per class index, and opposite
/// pairs are declared on both ends with at most one containment.
pub fn build(s: &Shape) -> ModelPackage {
    let enums: Vec<EnumDef> = s
        .enums
        .iter()
        .enumerate()
        .map(|(i, &k)| EnumDef { name: format!("E{i}"), literals: (0..k).map(|j| format!("L{i}x{j}")).collect() })
        .collect();
    let mut classes: Vec<ClassDef> = (0..s.classes)
        .map(|i| ClassDef {
            name: format!("C{i}"),
            is_abstract: s.abstracts[i],
            super_class: s.supers[i].filter(|&p| p < i).map(|p| format!("C{p}")),
            ..Default::default()
        })
        .collect();
    for (i, c) in classes.iter_mut().enumerate() {
        for (j, &(code, many, default)) in s.attrs[i].iter().enumerate() {
            let ty = data_type(code, &enums);
            let default_value = default.filter(|_| !many).map(|d| default_for(&ty, d, &enums));
            c.attributes.push(AttributeDef { name: format!("a{i}x{j}"), ty, is_many: many, default_value });
        }
        for (j, &(target, many, containment)) in s.refs[i].iter().enumerate() {
            c.references.push(ReferenceDef {
                name: format!("r{i}x{j}"),
                target: format!("C{target}"),
                is_many: many,
                is_containment: containment,
                opposite: None,
            });
        }
        for (j, (params, ret, spec)) in s.ops[i].iter().enumerate() {
            let ret = *ret;
            c.operations.push(OperationDef {
                name: format!("op{i}x{j}"),
                params: params
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| Param { name: format!("p{k}"), ty: param_type(t, s.classes, &enums) })
                    .collect(),
                return_type: if ret == 9 { TypeRef::Void } else { param_type(ret, s.classes, &enums) },
                spec: spec.clone(),
            });
        }
    }
    for (k, &(a, b, many, containment)) in s.opposites.iter().enumerate() {
        let (fwd, back) = (format!("o{k}f"), format!("o{k}b"));
        classes[a].references.push(ReferenceDef {
            name: fwd.clone(),
            target: format!("C{b}"),
            is_many: many,
            is_containment: containment,
            opposite: Some(back.clone()),
        });
        classes[b].references.push(ReferenceDef {
            name: back,
            target: format!("C{a}"),
            is_many: false,
            is_containment: false,
            opposite: Some(fwd),
        });
    }
    ModelPackage { name: "fuzz".into(), classes, enums }
}
