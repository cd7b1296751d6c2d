mod common;

use proptest::prelude::*;

use hybridgen::model::{validate_model, ViolationKind};

use common::models::{build, shape};
use common::{invalid_fixture, round_trip};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialize_then_parse_is_identity(s in shape()) {
        round_trip(&build(&s))?;
    }

    #[test]
    fn one_injected_cycle_is_one_violation(s in shape()) {
        let mut m = build(&s);
        let last = m.classes.len() - 1;
        // C0 has no superclass by construction; closing C0 -> Clast makes
        // exactly one cycle when Clast reaches C0, else a self-contained one.
        let reaches_root = {
            let mut cur = Some(last);
            let mut hit = false;
            while let Some(i) = cur {
                if i == 0 { hit = true; break; }
                cur = m.classes[i].super_class.as_ref().map(|n| n[1..].parse::<usize>().unwrap());
            }
            hit
        };
        prop_assume!(reaches_root);
        m.classes[0].super_class = Some(format!("C{last}"));
        let cycles = validate_model(&m).into_iter().filter(|v| v.kind == ViolationKind::CyclicInheritance).count();
        prop_assert_eq!(cycles, 1);
    }
}

#[test]
fn cyclic_fixture_has_exactly_one_violation() {
    assert_eq!(invalid_fixture("cyclic_inheritance.cmdl"), vec![ViolationKind::CyclicInheritance]);
}

#[test]
fn asymmetric_fixture_has_exactly_one_violation() {
    assert_eq!(invalid_fixture("opposite_asymmetry.cmdl"), vec![ViolationKind::OppositeAsymmetry]);
}
