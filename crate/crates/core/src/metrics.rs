//! pass@k / compilation@k: the unbiased estimator, per-problem aggregation
//! and report rendering. Generic over the scalar so the same code runs in
//! binary floating point and in exact rationals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fmt::{self, Debug};

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numeric type the metrics are computed in.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    /// `num / den`; `den > 0`.
    fn ratio(num: u64, den: u64) -> Self;
    fn to_f64(&self) -> f64;
}

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn ratio(num: u64, den: u64) -> Self {
                num as $t / den as $t
            }
            fn to_f64(&self) -> f64 {
                *self as f64
            }
        }
    )*};
}

float_scalar!(f32, f64);

impl Scalar for Rational64 {
    fn ratio(num: u64, den: u64) -> Self {
        let n = i64::try_from(num).expect("numerator fits i64");
        let d = i64::try_from(den).expect("denominator fits i64");
        Rational64::new(n, d)
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("estimator domain error: n={n}, c={c}, k={k}")]
    Domain { n: usize, c: usize, k: usize },
    #[error("problem `{problem}` under `{approach}` has {got} of {expected} samples")]
    IncompleteSamples { problem: String, approach: String, got: usize, expected: usize },
    #[error("inconsistent sample record {problem}#{sample}: {reason}")]
    InvalidRecord { problem: String, sample: u32, reason: String },
}

/// `1 - C(n-c, k) / C(n, k)`, as the product `1 - prod_{i=n-c+1..=n} (1 - k/i)`.
pub fn estimator<T: Scalar>(n: usize, c: usize, k: usize) -> Result<T, MetricsError> {
    if c > n || k == 0 || k > n {
        return Err(MetricsError::Domain { n, c, k });
    }
    if n - c < k {
        return Ok(T::one());
    }
    let mut miss = T::one();
    for i in (n - c + 1)..=n {
        miss = miss * T::ratio((i - k) as u64, i as u64);
    }
    Ok(T::one() - miss)
}

/// Outcome of one generated sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub problem_id: String,
    pub approach: String,
    pub sample_index: u32,
    pub compiled: bool,
    pub tests_total: usize,
    pub tests_passed: usize,
    /// All tests passed on compiled code.
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl SampleRecord {
    /// Builds a record with `passed` derived from the other fields.
    pub fn new(
        problem_id: &str,
        approach: &str,
        sample_index: u32,
        compiled: bool,
        tests_total: usize,
        tests_passed: usize,
    ) -> Self {
        let tests_passed = if compiled { tests_passed } else { 0 };
        SampleRecord {
            problem_id: problem_id.to_string(),
            approach: approach.to_string(),
            sample_index,
            compiled,
            tests_total,
            tests_passed,
            passed: compiled && tests_total > 0 && tests_passed == tests_total,
            failure: None,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |reason: &str| {
            Err(MetricsError::InvalidRecord {
                problem: self.problem_id.clone(),
                sample: self.sample_index,
                reason: reason.to_string(),
            })
        };
        if self.tests_passed > self.tests_total {
            return bad("more tests passed than exist");
        }
        if self.passed && !(self.compiled && self.tests_passed == self.tests_total) {
            return bad("passed without compiling and passing every test");
        }
        if !self.compiled && self.tests_passed > 0 {
            return bad("tests passed on code that does not compile");
        }
        Ok(())
    }
}

/// Raw per-problem counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemCounts {
    pub problem_id: String,
    pub n: usize,
    pub c_pass: usize,
    pub c_compile: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproachMetrics<T> {
    pub approach: String,
    /// Mean over problems, keyed by k.
    pub pass_at: BTreeMap<usize, T>,
    pub compile_at: BTreeMap<usize, T>,
    pub problems: Vec<ProblemCounts>,
}

/// Approaches in first-seen order; `ks` ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport<T> {
    pub n: usize,
    pub ks: Vec<usize>,
    pub approaches: Vec<ApproachMetrics<T>>,
}

impl<T: Scalar> MetricReport<T> {
    pub fn to_f64(&self) -> MetricReport<f64> {
        let conv = |m: &BTreeMap<usize, T>| m.iter().map(|(k, v)| (*k, v.to_f64())).collect();
        MetricReport {
            n: self.n,
            ks: self.ks.clone(),
            approaches: self
                .approaches
                .iter()
                .map(|a| ApproachMetrics {
                    approach: a.approach.clone(),
                    pass_at: conv(&a.pass_at),
                    compile_at: conv(&a.compile_at),
                    problems: a.problems.clone(),
                })
                .collect(),
        }
    }
}

/// Aggregates with exactly `n` samples per (problem, approach).
pub fn aggregate<T: Scalar>(records: &[SampleRecord], n: usize, ks: &[usize]) -> Result<MetricReport<T>, MetricsError> {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for &k in &ks {
        if k == 0 || k > n {
            return Err(MetricsError::Domain { n, c: 0, k });
        }
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(&str, &str), Vec<&SampleRecord>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        if !order.contains(&r.approach.as_str()) {
            order.push(&r.approach);
        }
        groups.entry((&r.approach, &r.problem_id)).or_default().push(r);
    }
    let mut approaches = Vec::new();
    for approach in order {
        let mut problems = Vec::new();
        for ((a, p), rs) in groups.range((approach, "")..) {
            if *a != approach {
                break;
            }
            let mut seen: Vec<u32> = rs.iter().map(|r| r.sample_index).collect();
            seen.sort_unstable();
            seen.dedup();
            if rs.len() != n || seen.len() != n {
                return Err(MetricsError::IncompleteSamples {
                    problem: p.to_string(),
                    approach: approach.to_string(),
                    got: seen.len(),
                    expected: n,
                });
            }
            problems.push(ProblemCounts {
                problem_id: p.to_string(),
                n,
                c_pass: rs.iter().filter(|r| r.passed).count(),
                c_compile: rs.iter().filter(|r| r.compiled).count(),
            });
        }
        let count = T::ratio(problems.len() as u64, 1);
        let mut pass_at = BTreeMap::new();
        let mut compile_at = BTreeMap::new();
        for &k in &ks {
            let mut sp = T::zero();
            let mut sc = T::zero();
            for p in &problems {
                sp = sp + estimator::<T>(n, p.c_pass, k)?;
                sc = sc + estimator::<T>(n, p.c_compile, k)?;
            }
            pass_at.insert(k, sp / count.clone());
            compile_at.insert(k, sc / count.clone());
        }
        approaches.push(ApproachMetrics { approach: approach.to_string(), pass_at, compile_at, problems });
    }
    Ok(MetricReport { n, ks, approaches })
}

/// Relative change of `v` against `base`, rounded to a whole percent.
pub fn delta_label(v: f64, base: f64) -> String {
    if base == 0.0 {
        return if v == 0.0 { "0%".into() } else { "n/a".into() };
    }
    let pct = ((v - base) / base * 100.0).round();
    if pct > 0.0 {
        format!("↑{pct:.0}%")
    } else if pct < 0.0 {
        format!("↓{:.0}%", -pct)
    } else {
        "0%".into()
    }
}

struct Table(Vec<Vec<String>>);

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.0.iter().map(Vec::len).max().unwrap_or(0);
        let width = |c: usize| self.0.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0);
        let widths: Vec<usize> = (0..cols).map(width).collect();
        for row in &self.0 {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    line.push_str(cell);
                    line.push_str(&" ".repeat(pad));
                } else {
                    line.push_str("  ");
                    line.push_str(&" ".repeat(pad));
                    line.push_str(cell);
                }
            }
            writeln!(f, "{}", line.trim_end())?;
        }
        Ok(())
    }
}

/// Aligned table: one row per approach, columns pass@k for each k then
/// comp@k for each k. Every value carries its delta against the first row;
/// the first row's deltas are `–`.
pub fn render_table(report: &MetricReport<f64>) -> String {
    let mut rows = vec![{
        let mut h = vec!["approach".to_string()];
        h.extend(report.ks.iter().map(|k| format!("pass@{k}")));
        h.extend(report.ks.iter().map(|k| format!("comp@{k}")));
        h
    }];
    let base = report.approaches.first();
    for (i, a) in report.approaches.iter().enumerate() {
        let mut row = vec![a.approach.clone()];
        for pick in [true, false] {
            for k in &report.ks {
                let get = |m: &ApproachMetrics<f64>| if pick { m.pass_at[k] } else { m.compile_at[k] };
                let v = get(a);
                let d = if i == 0 { "–".to_string() } else { delta_label(v, get(base.expect("row 0 exists"))) };
                row.push(format!("{v:.2} {d}"));
            }
        }
        rows.push(row);
    }
    Table(rows).to_string()
}

pub const REPORT_SCHEMA: &str = "metric-report";
pub const REPORT_VERSION: u32 = 1;

/// Line-delimited JSON: a header, one line per (approach, k) and one per
/// (approach, problem). Full precision; stable order.
pub fn render_records(report: &MetricReport<f64>) -> String {
    let mut out = String::new();
    let header =
        serde_json::json!({"schema": REPORT_SCHEMA, "version": REPORT_VERSION, "n": report.n, "ks": report.ks});
    let _ = writeln!(out, "{header}");
    for a in &report.approaches {
        for k in &report.ks {
            let line = serde_json::json!({
                "record": "metric",
                "approach": a.approach,
                "k": k,
                "pass_at_k": a.pass_at[k],
                "compile_at_k": a.compile_at[k],
            });
            let _ = writeln!(out, "{line}");
        }
        for p in &a.problems {
            let line = serde_json::json!({
                "record": "problem",
                "approach": a.approach,
                "problem": p.problem_id,
                "n": p.n,
                "c_pass": p.c_pass,
                "c_compile": p.c_compile,
            });
            let _ = writeln!(out, "{line}");
        }
    }
    out
}
