use std::collections::BTreeSet;

use hybridgen::backend::{Backend, DiagnosticKind, MethodKey, MiniOoBackend, SourceUnit, TestProgram};
use hybridgen::minioo::{parse_program, print_program};
use hybridgen::model::parse_model;

const EMPLOYEE: &str = r#"package hr {
  class Employee {
    attr name: String;
    attr hireDate: Date;
    attr active: Bool = true;
    attr skills: String[*];
    op computeLongServiceBonus(currentDate: Date): Float spec {
      summary "Bonus of 1000 per full year of service beyond five.";
      algorithm "Count full years between hireDate and currentDate.";
      input currentDate "the evaluation date, not before hireDate";
      output "the bonus amount, non-negative";
      pre "hireDate is set";
      post "result >= 0";
    }
  }
}"#;

fn employee_units() -> Vec<SourceUnit> {
    let m = parse_model(EMPLOYEE).unwrap();
    MiniOoBackend::default().generate_skeleton(&m).unwrap()
}

fn unit<'a>(units: &'a [SourceUnit], id: &str) -> &'a SourceUnit {
    units.iter().find(|u| u.class_id == id).unwrap()
}

fn bonus_key() -> MethodKey {
    MethodKey::new("Employee", "computeLongServiceBonus", 1)
}

#[test]
fn skeleton_shape_and_compiles() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    assert_eq!(units.len(), 2, "class unit plus factory");
    let e = unit(&units, "Employee");
    assert_eq!(e.path, "src/Employee.mo");
    for needle in [
        "method getHireDate(): Date",
        "method setHireDate(newHireDate: Date): Void",
        "method isActive(): Bool",
        "method getSkills(): List<String>",
        "field active: Bool = true;",
        "field skills: List<String> = [];",
        "raise Unsupported(\"not implemented\");",
        "Summary: Bonus of 1000",
        "@generated NOT",
    ] {
        assert!(e.text.contains(needle), "missing {needle}\n{}", e.text);
    }
    assert!(!e.text.contains("getActive"));
    assert!(!e.text.contains("setSkills"));
    let r = b.compile_check(&units);
    assert!(r.ok, "{:?}", r.diagnostics);
    assert!(unit(&units, "HrFactory").text.contains("method createEmployee(): Employee"));
}

#[test]
fn zero_operation_model_has_no_trap() {
    let m = parse_model("package p { class A { attr x: Int; } }").unwrap();
    let b = MiniOoBackend::default();
    let units = b.generate_skeleton(&m).unwrap();
    assert!(units.iter().all(|u| !u.text.contains("raise")));
    assert!(b.compile_check(&units).ok);
}

#[test]
fn unannotated_operation_is_rejected() {
    let m = parse_model("package p { class A { op f(): Int; } }").unwrap();
    assert!(MiniOoBackend::default().generate_skeleton(&m).is_err());
}

#[test]
fn reserved_feature_name_clashes() {
    let m = parse_model("package p { class A { attr while: Int; } }").unwrap();
    let err = MiniOoBackend::default().generate_skeleton(&m).unwrap_err();
    assert!(err.to_string().contains("name clash"), "{err}");
}

#[test]
fn undeclared_method_is_unresolved_with_location() {
    let b = MiniOoBackend::default();
    let text = "class A {\n  method f(): Int {\n    return getX();\n  }\n}\n";
    let r = b.compile_check(&[SourceUnit { path: "src/A.mo".into(), class_id: "A".into(), text: text.into() }]);
    assert!(!r.ok);
    assert_eq!(r.diagnostics.len(), 1);
    let d = &r.diagnostics[0];
    assert_eq!(d.kind, DiagnosticKind::UnresolvedSymbol);
    assert_eq!(d.line, 3);
    assert_eq!(d.source_line, "    return getX();");
    assert!(d.message.contains("getX"));
}

#[test]
fn string_into_int_field_is_type_mismatch() {
    let b = MiniOoBackend::default();
    let text = "class A {\n  field n: Int;\n  method f(): Void {\n    n = \"x\";\n  }\n}\n";
    let r = b.compile_check(&[SourceUnit { path: "src/A.mo".into(), class_id: "A".into(), text: text.into() }]);
    assert_eq!(r.diagnostics.len(), 1);
    assert_eq!(r.diagnostics[0].kind, DiagnosticKind::TypeMismatch);
}

#[test]
fn errors_reference_only_the_faulty_unit() {
    let b = MiniOoBackend::default();
    let good = SourceUnit {
        path: "src/A.mo".into(),
        class_id: "A".into(),
        text: "class A {\n  method f(): Int {\n    return 1;\n  }\n}\n".into(),
    };
    let bad = SourceUnit {
        path: "src/B.mo".into(),
        class_id: "B".into(),
        text: "class B {\n  method g(a: A): Int {\n    return a.h();\n  }\n}\n".into(),
    };
    let r = b.compile_check(&[good, bad]);
    assert!(!r.ok);
    assert!(r.diagnostics.iter().all(|d| d.path == "src/B.mo"));
}

#[test]
fn syntax_error_reports_line() {
    let b = MiniOoBackend::default();
    let err = b
        .parse_code(&SourceUnit { path: "src/X.mo".into(), class_id: "X".into(), text: "class {".into() })
        .unwrap_err();
    assert_eq!(err[0].kind, DiagnosticKind::Syntax);
    assert_eq!(err[0].line, 1);
}

#[test]
fn compress_keeps_only_target_docstrings() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    let e = unit(&units, "Employee");
    let keep = BTreeSet::from([bonus_key()]);
    let c = b.compress(e, &keep).unwrap();
    assert!(c.text.contains("Summary: Bonus of 1000"));
    assert!(!c.text.contains("Returns the value"));
    assert!(!c.text.contains("//"));
    assert!(!c.text.contains("= true"));
    let tree = b.parse_code(&c).unwrap();
    assert!(tree.classes[0].methods.iter().all(|m| m.is_trap));

    let none = b.compress(e, &BTreeSet::new()).unwrap();
    assert!(!none.text.contains("/**"));
    assert_eq!(b.compress(&c, &keep).unwrap(), c);
    assert!(c.text.len() * 10 <= e.text.len() * 7, "{} vs {}", c.text.len(), e.text.len());
}

#[test]
fn compress_preserves_signatures() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    let e = unit(&units, "Employee");
    let c = b.compress(e, &BTreeSet::new()).unwrap();
    let sig = |u: &SourceUnit| {
        let t = b.parse_code(u).unwrap();
        t.classes.iter().flat_map(|c| c.methods.iter().map(|m| m.signature.clone())).collect::<Vec<_>>()
    };
    assert_eq!(sig(e), sig(&c));
}

#[test]
fn merge_of_compressed_base_is_identity() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    let e = unit(&units, "Employee");
    let all = b.operation_keys(&parse_model(EMPLOYEE).unwrap(), "Employee");
    let c = b.compress(e, &all).unwrap();
    let (merged, report) = b.merge(e, &c, &all).unwrap();
    assert!(report.rejected_edits.is_empty());
    assert!(report.replaced_methods.is_empty());
    assert_eq!(parse_program(&merged.text).unwrap(), parse_program(&e.text).unwrap());
    assert_eq!(merged.text, e.text);
}

#[test]
fn merge_replaces_targets_appends_helpers_rejects_other_edits() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    let e = unit(&units, "Employee");
    let completed = "import util;\nclass Employee {\n  method getName(): String {\n    return \"hacked\";\n  }\n\n  method computeLongServiceBonus(currentDate: Date): Float {\n    var years: Int = yearsBetween(hireDate, currentDate);\n    if (years <= 5) {\n      return 0.0;\n    }\n    return 1000.0 * (years - 5);\n  }\n\n  method yearsBetween(a: Date, b: Date): Int {\n    return a.daysBetween(b) / 365;\n  }\n}\n";
    let done = SourceUnit { path: e.path.clone(), class_id: "Employee".into(), text: completed.into() };
    let targets = BTreeSet::from([bonus_key()]);
    let (merged, report) = b.merge(e, &done, &targets).unwrap();
    assert_eq!(report.replaced_methods, vec![bonus_key()]);
    assert_eq!(report.added_helpers, vec![MethodKey::new("Employee", "yearsBetween", 2)]);
    assert_eq!(report.added_imports, vec!["util".to_string()]);
    assert_eq!(report.rejected_edits.len(), 1);
    assert!(report.rejected_edits[0].0.contains("getName"));
    assert!(merged.text.contains("return name;"));
    assert!(!merged.text.contains("hacked"));
    assert!(merged.text.contains("@generated NOT"), "target docstring stays");
    assert!(merged.text.starts_with("import util;\n"));

    // Every line of the base outside the target body survives.
    let base_lines: Vec<&str> = e.text.lines().collect();
    let kept =
        base_lines.iter().filter(|l| !l.contains("raise Unsupported")).all(|l| merged.text.lines().any(|m| m == *l));
    assert!(kept);
}

#[test]
fn merge_rejects_colliding_helper() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    let e = unit(&units, "Employee");
    let done = SourceUnit {
        path: e.path.clone(),
        class_id: "Employee".into(),
        text: "class Employee {\n  method getName(x: Int): String {\n    return \"\";\n  }\n}\n".into(),
    };
    let (merged, report) = b.merge(e, &done, &BTreeSet::from([bonus_key()])).unwrap();
    assert!(report.added_helpers.is_empty());
    assert_eq!(report.rejected_edits.len(), 1);
    assert_eq!(merged.text, e.text);
}

#[test]
fn merge_unparseable_completion_errors() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    let e = unit(&units, "Employee");
    let done = SourceUnit { path: e.path.clone(), class_id: "Employee".into(), text: "class Employee {".into() };
    assert!(b.merge(e, &done, &BTreeSet::new()).is_err());
}

#[test]
fn print_parse_fixpoint_on_skeleton() {
    for u in employee_units() {
        let once = print_program(&parse_program(&u.text).unwrap());
        let twice = print_program(&parse_program(&once).unwrap());
        assert_eq!(once, twice);
        assert_eq!(parse_program(&once).unwrap(), parse_program(&u.text).unwrap());
    }
}

#[test]
fn run_tests_outcomes() {
    let b = MiniOoBackend::default();
    let units = employee_units();
    let tests = vec![
        TestProgram {
            id: "trivial".into(),
            text: "assert 1 == 1;".into(),
        },
        TestProgram {
            id: "trap".into(),
            text: "var e: Employee = new Employee();\ne.setHireDate(Date.of(2000, 1, 1));\nassert e.computeLongServiceBonus(Date.of(2020, 1, 1)) > 0.0;".into(),
        },
        TestProgram {
            id: "loop".into(),
            text: "while (true) {\n}".into(),
        },
        TestProgram {
            id: "broken".into(),
            text: "assert nope == 1;".into(),
        },
        TestProgram {
            id: "accessors".into(),
            text: "var e: Employee = new Employee();\nassert e.isActive();\ne.getSkills().add(\"x\");\nassert e.getSkills().size() == 1;".into(),
        },
    ];
    let out = b.run_tests(&units, &tests);
    assert_eq!(out.len(), 5);
    assert!(out[0].passed);
    assert!(out[1].failure_message.as_deref().unwrap().contains("unsupported operation"));
    assert_eq!(out[2].failure_message.as_deref(), Some("step budget exceeded"));
    assert!(out[3].failure_message.as_deref().unwrap().contains("does not compile"));
    assert!(out[4].passed, "{:?}", out[4]);
    assert_eq!(out, b.run_tests(&units, &tests));
}

#[test]
fn split_units_one_per_type() {
    let b = MiniOoBackend::default();
    let units = b.split_units("enum E { A, B }\nclass X {\n}\nclass Y extends X {\n}\n").unwrap();
    let ids: Vec<&str> = units.iter().map(|u| u.class_id.as_str()).collect();
    assert_eq!(ids, ["E", "X", "Y"]);
    assert!(b.compile_check(&units).ok);
}
