//! Benchmark problems, sample orchestration and report files.
//!
//! Layout of a benchmark directory:
//!
//! ```text
//! bench/<id>/requirement.txt
//! bench/<id>/model.cmdl
//! bench/<id>/manifest.toml
//! bench/<id>/tests/<test-id>.txt      natural-language test case
//! bench/<id>/canonical/<test-id>.mot  optional executable test
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, TestProgram};
use crate::llm::ChatProvider;
use crate::metrics::{aggregate, render_records, render_table, MetricReport, MetricsError, SampleRecord};
use crate::model::{parse_model, validate_model, ModelPackage};
use crate::pipeline::{run_sample, Approach, PipelineSettings, SampleRun};

pub const SAMPLES_SCHEMA: &str = "sample-records";
pub const SAMPLES_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("problem `{id}`: {message}")]
    InvalidProblem { id: String, message: String },
    #[error("duplicate problem id `{0}`")]
    DuplicateProblem(String),
    #[error("k={k} is outside 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("cannot start worker threads: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Manifest {
    pub id: String,
    pub title: String,
    pub domain: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub id: String,
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub requirement: String,
    pub model: ModelPackage,
    /// `(test id, natural-language case)`, sorted by id; never empty.
    pub test_specs: Vec<(String, String)>,
    /// Sorted by id.
    pub canonical: Vec<TestProgram>,
    /// Size checks that do not prevent evaluation.
    pub warnings: Vec<String>,
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>, EvalError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let entries = fs::read_dir(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    let mut out: Vec<(String, PathBuf)> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .filter_map(|p| Some((p.file_stem()?.to_string_lossy().into_owned(), p)))
        .collect();
    out.sort();
    Ok(out)
}

pub fn load_problem(dir: &Path) -> Result<Problem, EvalError> {
    let fallback_id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest_path = dir.join("manifest.toml");
    let mut manifest: Manifest = if manifest_path.exists() {
        toml::from_str(&read(&manifest_path)?)
            .map_err(|e| EvalError::InvalidProblem { id: fallback_id.clone(), message: format!("manifest: {e}") })?
    } else {
        Manifest::default()
    };
    if manifest.id.is_empty() {
        manifest.id = fallback_id;
    }
    let id = manifest.id.clone();
    let invalid = |message: String| EvalError::InvalidProblem { id: id.clone(), message };

    let requirement = read(&dir.join("requirement.txt"))?;
    if requirement.trim().is_empty() {
        return Err(invalid("requirement is empty".into()));
    }
    let model = parse_model(&read(&dir.join("model.cmdl"))?).map_err(|e| invalid(format!("model: {e}")))?;
    let violations = validate_model(&model);
    if !violations.is_empty() {
        return Err(invalid(format!("model has {} violation(s)", violations.len())));
    }
    let mut test_specs = Vec::new();
    for (tid, path) in sorted_files(&dir.join("tests"), "txt")? {
        test_specs.push((tid, read(&path)?));
    }
    if test_specs.is_empty() {
        return Err(invalid("no natural-language test cases".into()));
    }
    let mut canonical = Vec::new();
    for (tid, path) in sorted_files(&dir.join("canonical"), "mot")? {
        canonical.push(TestProgram { id: tid, text: read(&path)? });
    }
    let mut warnings = Vec::new();
    let words = requirement.split_whitespace().count();
    if !(122..=483).contains(&words) {
        warnings.push(format!("requirement has {words} words, outside the usual 122 to 483"));
    }
    if !(15..=31).contains(&test_specs.len()) {
        warnings.push(format!("{} test cases, outside the usual 15 to 31", test_specs.len()));
    }
    for w in &warnings {
        log::info!("{id}: {w}");
    }
    Ok(Problem { id, dir: dir.to_path_buf(), manifest, requirement, model, test_specs, canonical, warnings })
}

/// Every subdirectory holding a `model.cmdl`, sorted by id.
pub fn load_bench(dir: &Path) -> Result<Vec<Problem>, EvalError> {
    let entries = fs::read_dir(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    let mut dirs: Vec<PathBuf> =
        entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.join("model.cmdl").is_file()).collect();
    dirs.sort();
    let mut problems: Vec<Problem> = Vec::new();
    for d in dirs {
        let p = load_problem(&d)?;
        if problems.iter().any(|q| q.id == p.id) {
            return Err(EvalError::DuplicateProblem(p.id));
        }
        problems.push(p);
    }
    problems.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(problems)
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub approaches: Vec<Approach>,
    pub n: usize,
    pub ks: Vec<usize>,
    /// Worker threads; 1 runs sequentially.
    pub jobs: usize,
    pub settings: PipelineSettings,
}

#[derive(Debug)]
pub struct EvalRun {
    /// Sorted by (approach order, problem id, sample index).
    pub records: Vec<SampleRecord>,
    pub report: MetricReport<f64>,
    pub provider_failures: usize,
}

/// `<workspace>/<problem>/<approach>/<sample>`.
pub fn sample_dir(workspace: &Path, problem: &str, approach: &Approach, sample: u32) -> PathBuf {
    workspace.join(problem).join(approach.to_string()).join(sample.to_string())
}

/// Runs every (approach, problem, sample) unit of work and aggregates.
pub fn run_eval(
    problems: &[Problem],
    config: &EvalConfig,
    provider: &dyn ChatProvider,
    backend: &dyn Backend,
    workspace: Option<&Path>,
) -> Result<EvalRun, EvalError> {
    for &k in &config.ks {
        if k == 0 || k > config.n {
            return Err(EvalError::BadK { k, n: config.n });
        }
    }
    let mut work = Vec::new();
    for (ai, approach) in config.approaches.iter().enumerate() {
        for (pi, problem) in problems.iter().enumerate() {
            for s in 0..config.n as u32 {
                work.push((ai, pi, approach, problem, s));
            }
        }
    }
    let one = |&(ai, pi, approach, problem, s): &(usize, usize, &Approach, &Problem, u32)| {
        let dir = workspace.map(|w| sample_dir(w, &problem.id, approach, s));
        let run: SampleRun = run_sample(problem, approach, provider, backend, s, &config.settings, dir.as_deref());
        log::info!(
            "{} {} #{}: compiled={} passed={}/{}",
            approach,
            problem.id,
            s,
            run.record.compiled,
            run.record.tests_passed,
            run.record.tests_total
        );
        ((ai, pi, s), run.record, run.provider_failure)
    };
    let mut results: Vec<((usize, usize, u32), SampleRecord, bool)> = if config.jobs <= 1 {
        work.iter().map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
        pool.install(|| work.par_iter().map(one).collect())
    };
    results.sort_by_key(|(key, _, _)| *key);
    let provider_failures = results.iter().filter(|(_, _, f)| *f).count();
    let records: Vec<SampleRecord> = results.into_iter().map(|(_, r, _)| r).collect();
    let report = aggregate::<f64>(&records, config.n, &config.ks)?;
    Ok(EvalRun { records, report, provider_failures })
}

/// Header line plus one JSON record per sample.
pub fn render_sample_records(records: &[SampleRecord]) -> String {
    let mut out = serde_json::json!({"schema": SAMPLES_SCHEMA, "version": SAMPLES_VERSION}).to_string();
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Writes `report.txt`, `report.jsonl` and `samples.jsonl` into `dir`.
pub fn write_reports(dir: &Path, run: &EvalRun) -> Result<BTreeMap<&'static str, PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    let files = [
        ("report.txt", render_table(&run.report)),
        ("report.jsonl", render_records(&run.report)),
        ("samples.jsonl", render_sample_records(&run.records)),
    ];
    let mut out = BTreeMap::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| EvalError::Io { path: path.clone(), source })?;
        out.insert(name, path);
    }
    Ok(out)
}
