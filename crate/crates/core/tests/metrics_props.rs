use num_rational::Rational64;
use proptest::prelude::*;

use hybridgen::metrics::{aggregate, estimator, render_records, SampleRecord, Scalar};

fn triple() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=40).prop_flat_map(|n| (Just(n), 0..=n, 1..=n))
}

/// Random per-sample outcomes for `problems` problems and `n` samples.
fn outcomes() -> impl Strategy<Value = (usize, Vec<Vec<(bool, usize)>>)> {
    (1usize..=6, 1usize..=4).prop_flat_map(|(n, problems)| {
        (Just(n), prop::collection::vec(prop::collection::vec((any::<bool>(), 0usize..=3), n), problems))
    })
}

fn records(per_problem: &[Vec<(bool, usize)>]) -> Vec<SampleRecord> {
    let mut out = Vec::new();
    for (p, samples) in per_problem.iter().enumerate() {
        for (i, &(compiled, passed)) in samples.iter().enumerate() {
            out.push(SampleRecord::new(&format!("p{p}"), "x", i as u32, compiled, 3, passed));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn nondecreasing_in_c((n, c, k) in triple()) {
        prop_assume!(c < n);
        let lo = estimator::<Rational64>(n, c, k).unwrap();
        let hi = estimator::<Rational64>(n, c + 1, k).unwrap();
        prop_assert!(lo <= hi);
    }

    #[test]
    fn nondecreasing_in_k((n, c, k) in triple()) {
        prop_assume!(k < n);
        let lo = estimator::<Rational64>(n, c, k).unwrap();
        let hi = estimator::<Rational64>(n, c, k + 1).unwrap();
        prop_assert!(lo <= hi);
    }

    #[test]
    fn float_types_agree_with_exact((n, c, k) in triple()) {
        let exact = estimator::<Rational64>(n, c, k).unwrap().to_f64();
        prop_assert!((estimator::<f64>(n, c, k).unwrap() - exact).abs() < 1e-12);
        prop_assert!((f64::from(estimator::<f32>(n, c, k).unwrap()) - exact).abs() < 1e-5);
        prop_assert!((0.0..=1.0).contains(&exact));
    }

    #[test]
    fn pass_never_exceeds_compile((n, per_problem) in outcomes()) {
        let ks: Vec<usize> = (1..=n).collect();
        let report = aggregate::<Rational64>(&records(&per_problem), n, &ks).unwrap();
        for a in &report.approaches {
            for k in &ks {
                prop_assert!(a.pass_at[k] <= a.compile_at[k]);
            }
        }
    }

    #[test]
    fn record_file_is_stable((n, per_problem) in outcomes()) {
        let recs = records(&per_problem);
        let a = render_records(&aggregate::<f64>(&recs, n, &[1]).unwrap());
        let b = render_records(&aggregate::<f64>(&recs, n, &[1]).unwrap());
        prop_assert_eq!(a, b);
    }
}
