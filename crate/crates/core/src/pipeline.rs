//! One sample end to end: decomposition, skeleton, completion, repair,
//! compilation and tests, for the hybrid approach and the three baselines.
//! Every prompt, reply and intermediate workspace is written under the
//! sample directory when one is given.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CompileResult, SourceUnit, TestOutcome, TestProgram};
use crate::completion::{complete_all, DEFAULT_CONTEXT_BUDGET};
use crate::decompose::{decompose, passthrough_annotation, DecomposeError};
use crate::eval::Problem;
use crate::llm::{extract_code_block, ChatProvider, LlmError, Session, Stage};
use crate::metrics::SampleRecord;
use crate::model::{emit_plantuml, serialize_model, ModelPackage};
use crate::prompts::{render, Templates};
use crate::repair::{repair, RepairSettings, DEFAULT_MAX_ITERATIONS};

/// Switches that each remove one stage of the hybrid approach.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_decompose: bool,
    pub no_compress: bool,
    pub no_context: bool,
    pub no_fix: bool,
}

impl AblationFlags {
    pub fn any(&self) -> bool {
        self.no_decompose || self.no_compress || self.no_context || self.no_fix
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Approach {
    Hybrid(AblationFlags),
    /// Requirement only.
    BaseR,
    /// Requirement plus class diagram.
    BaseRCd,
    /// `BaseRCd` followed by the repair loop.
    BaseRCdFix,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Approach::Hybrid(flags) => {
                f.write_str("iecoregen")?;
                for (on, name) in [
                    (flags.no_decompose, "no-decompose"),
                    (flags.no_compress, "no-compress"),
                    (flags.no_context, "no-context"),
                    (flags.no_fix, "no-fix"),
                ] {
                    if on {
                        write!(f, "+{name}")?;
                    }
                }
                Ok(())
            }
            Approach::BaseR => f.write_str("base-r"),
            Approach::BaseRCd => f.write_str("base-r-cd"),
            Approach::BaseRCdFix => f.write_str("base-r-cd-fix"),
        }
    }
}

impl FromStr for Approach {
    type Err = String;

    /// Accepts the names `Display` produces.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('+');
        let head = parts.next().unwrap_or("");
        let mut flags = AblationFlags::default();
        let approach = match head {
            "iecoregen" => {
                for p in parts.by_ref() {
                    match p {
                        "no-decompose" => flags.no_decompose = true,
                        "no-compress" => flags.no_compress = true,
                        "no-context" => flags.no_context = true,
                        "no-fix" => flags.no_fix = true,
                        other => return Err(format!("unknown ablation `{other}`")),
                    }
                }
                return Ok(Approach::Hybrid(flags));
            }
            "base-r" => Approach::BaseR,
            "base-r-cd" => Approach::BaseRCd,
            "base-r-cd-fix" => Approach::BaseRCdFix,
            other => return Err(format!("unknown approach `{other}`")),
        };
        match parts.next() {
            Some(_) => Err(format!("ablations apply to iecoregen only: `{s}`")),
            None => Ok(approach),
        }
    }
}

impl Approach {
    /// Same approach with extra ablations; baselines are unaffected.
    pub fn with_flags(self, extra: AblationFlags) -> Approach {
        match self {
            Approach::Hybrid(f) => Approach::Hybrid(AblationFlags {
                no_decompose: f.no_decompose || extra.no_decompose,
                no_compress: f.no_compress || extra.no_compress,
                no_context: f.no_context || extra.no_context,
                no_fix: f.no_fix || extra.no_fix,
            }),
            other => other,
        }
    }
}

/// Knobs shared by every sample of a run.
#[derive(Clone, Debug)]
pub struct PipelineSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_fix_iterations: usize,
    pub context_budget: usize,
    pub templates: Templates,
    /// Run shipped canonical tests instead of asking for test programs.
    pub canonical_tests: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            model_name: "replay".into(),
            temperature: 0.8,
            max_tokens: 4096,
            max_fix_iterations: DEFAULT_MAX_ITERATIONS,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            templates: Templates::default(),
            canonical_tests: true,
        }
    }
}

#[derive(Debug)]
pub struct SampleRun {
    pub record: SampleRecord,
    pub units: Vec<SourceUnit>,
    pub compile: Option<CompileResult>,
    pub outcomes: Vec<TestOutcome>,
    pub history: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
    /// The sample stopped on a provider failure.
    pub provider_failure: bool,
}

struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    fn write(&self, rel: &str, text: &str) {
        let Some(dir) = &self.dir else { return };
        let path = dir.join(rel);
        let done = path.parent().map_or(Ok(()), std::fs::create_dir_all).and_then(|_| std::fs::write(&path, text));
        if let Err(e) = done {
            log::warn!("cannot write {}: {e}", path.display());
        }
    }

    fn units(&self, stage: &str, units: &[SourceUnit]) {
        for u in units {
            self.write(&format!("{stage}/{}", u.path), &u.text);
        }
    }

    fn json<T: Serialize>(&self, rel: &str, value: &T) {
        if self.dir.is_some() {
            let text = serde_json::to_string_pretty(value).unwrap_or_default();
            self.write(rel, &(text + "\n"));
        }
    }
}

fn session<'p>(
    provider: &'p dyn ChatProvider,
    settings: &PipelineSettings,
    sample: u32,
    dir: Option<&Path>,
) -> Session<'p> {
    let mut s = Session::new(provider, &settings.model_name, settings.temperature, settings.max_tokens, sample);
    s.system = settings.templates.system.clone();
    match dir {
        Some(d) => s.with_log_dir(d.join("llm")),
        None => s,
    }
}

/// Test programs for `units`: canonical ones when configured and shipped,
/// else one chat call. Specs without a usable program come back as
/// failed outcomes.
pub fn generate_tests(
    problem: &Problem,
    units: &[SourceUnit],
    session: &Session<'_>,
    backend: &dyn Backend,
    settings: &PipelineSettings,
) -> Result<(Vec<TestProgram>, Vec<TestOutcome>), LlmError> {
    if settings.canonical_tests && !problem.canonical.is_empty() {
        return Ok((problem.canonical.clone(), Vec::new()));
    }
    let mut shown = String::new();
    for u in units {
        let keep: BTreeSet<_> = backend
            .parse_code(u)
            .map(|t| t.classes.into_iter().flat_map(|c| c.methods).map(|m| m.key).collect())
            .unwrap_or_default();
        let text = backend.compress(u, &keep).map_or_else(|_| u.text.clone(), |c| c.text);
        shown.push_str(&text);
        shown.push('\n');
    }
    let specs: String = problem.test_specs.iter().map(|(id, text)| format!("### {id}\n{}\n\n", text.trim())).collect();
    let prompt = render(
        &settings.templates.testgen,
        &[("language", backend.language()), ("units", shown.trim_end()), ("tests", specs.trim_end())],
    );
    let reply = session.ask(Stage::TestGen, &prompt)?;
    let sections = split_sections(&reply);
    let mut programs = Vec::new();
    let mut failed = Vec::new();
    for (id, _) in &problem.test_specs {
        let body = sections.iter().find(|(h, _)| h == id).map(|(_, b)| b.as_str());
        match body.map(|b| extract_code_block(b, Some(backend.language()), None)) {
            Some(Ok(code)) => programs.push(TestProgram { id: id.clone(), text: code }),
            Some(Err(e)) => failed.push(TestOutcome::fail(id, e.to_string())),
            None => failed.push(TestOutcome::fail(id, "no test program in reply")),
        }
    }
    Ok((programs, failed))
}

/// `(header, body)` for every `### header` section.
fn split_sections(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.trim_start().strip_prefix("###") {
            out.push((h.trim().trim_matches('`').to_string(), String::new()));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &Problem,
    approach: &Approach,
    sample: u32,
    units: Vec<SourceUnit>,
    compile: CompileResult,
    session: &Session<'_>,
    backend: &dyn Backend,
    settings: &PipelineSettings,
    art: &Artifacts,
    mut run: SampleRun,
) -> SampleRun {
    art.units("final", &units);
    art.json("compile.json", &compile);
    let total = if settings.canonical_tests && !problem.canonical.is_empty() {
        problem.canonical.len()
    } else {
        problem.test_specs.len()
    };
    let mut outcomes = Vec::new();
    if compile.ok {
        match generate_tests(problem, &units, session, backend, settings) {
            Ok((programs, failed)) => {
                for p in &programs {
                    art.write(&format!("tests/{}.mot", p.id), &p.text);
                }
                outcomes = backend.run_tests(&units, &programs);
                outcomes.extend(failed);
            }
            Err(e) => {
                run.provider_failure = true;
                run.warnings.push(format!("test generation failed: {e}"));
            }
        }
    }
    art.json("outcomes.json", &outcomes);
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let mut record = SampleRecord::new(&problem.id, &approach.to_string(), sample, compile.ok, total, passed);
    if run.provider_failure {
        record.passed = false;
        record.failure = run.warnings.last().cloned();
    }
    art.json("record.json", &record);
    art.json("calls.json", &session.calls());
    if !run.warnings.is_empty() {
        art.write("warnings.txt", &(run.warnings.join("\n") + "\n"));
    }
    run.record = record;
    run.units = units;
    run.compile = Some(compile);
    run.outcomes = outcomes;
    run
}

fn failed_run(
    problem: &Problem,
    approach: &Approach,
    sample: u32,
    reason: String,
    provider: bool,
    art: &Artifacts,
) -> SampleRun {
    let total = problem.canonical.len().max(problem.test_specs.len());
    let mut record = SampleRecord::new(&problem.id, &approach.to_string(), sample, false, total, 0);
    record.failure = Some(reason.clone());
    art.json("record.json", &record);
    art.write("warnings.txt", &(reason.clone() + "\n"));
    SampleRun {
        record,
        units: Vec::new(),
        compile: None,
        outcomes: Vec::new(),
        history: Vec::new(),
        warnings: vec![reason],
        provider_failure: provider,
    }
}

fn empty_run(problem: &Problem, approach: &Approach, sample: u32) -> SampleRun {
    SampleRun {
        record: SampleRecord::new(&problem.id, &approach.to_string(), sample, false, 0, 0),
        units: Vec::new(),
        compile: None,
        outcomes: Vec::new(),
        history: Vec::new(),
        warnings: Vec::new(),
        provider_failure: false,
    }
}

/// Runs one sample of `approach`. Never fails: problems surface in the
/// record's `failure` field.
pub fn run_sample(
    problem: &Problem,
    approach: &Approach,
    provider: &dyn ChatProvider,
    backend: &dyn Backend,
    sample: u32,
    settings: &PipelineSettings,
    dir: Option<&Path>,
) -> SampleRun {
    match approach {
        Approach::Hybrid(flags) => run_hybrid_sample(problem, flags, provider, backend, sample, settings, dir),
        _ => run_baseline_sample(problem, approach, provider, backend, sample, settings, dir),
    }
}

pub fn run_hybrid_sample(
    problem: &Problem,
    flags: &AblationFlags,
    provider: &dyn ChatProvider,
    backend: &dyn Backend,
    sample: u32,
    settings: &PipelineSettings,
    dir: Option<&Path>,
) -> SampleRun {
    let approach = Approach::Hybrid(*flags);
    let art = Artifacts { dir: dir.map(Path::to_path_buf) };
    let session = session(provider, settings, sample, dir);
    let mut run = empty_run(problem, &approach, sample);

    let annotated: ModelPackage = if flags.no_decompose {
        match passthrough_annotation(&problem.model, &problem.requirement) {
            Ok(m) => m,
            Err(e) => return failed_run(problem, &approach, sample, format!("annotation failed: {e}"), false, &art),
        }
    } else {
        match decompose(&problem.model, &problem.requirement, &session, &settings.templates) {
            Ok((m, result)) => {
                run.warnings.extend(result.warnings);
                m
            }
            Err(e) => {
                let provider_side = matches!(e, DecomposeError::Provider(_));
                return failed_run(
                    problem,
                    &approach,
                    sample,
                    format!("decomposition failed: {e}"),
                    provider_side,
                    &art,
                );
            }
        }
    };
    art.write("annotated.cmdl", &serialize_model(&annotated));

    let skeleton = match backend.generate_skeleton(&annotated) {
        Ok(u) => u,
        Err(e) => {
            return failed_run(problem, &approach, sample, format!("skeleton generation failed: {e}"), false, &art)
        }
    };
    art.units("skeleton", &skeleton);

    let completed = match complete_all(
        &annotated,
        &skeleton,
        &session,
        backend,
        flags,
        &settings.templates,
        settings.context_budget,
    ) {
        Ok(out) => {
            run.warnings.extend(out.warnings);
            art.json("merge-reports.json", &out.reports);
            out.units
        }
        Err(e) => return failed_run(problem, &approach, sample, format!("completion failed: {e}"), true, &art),
    };
    art.units("completed", &completed);

    let (units, compile) = if flags.no_fix {
        let c = backend.compile_check(&completed);
        run.history = vec![(0, c.diagnostics.len())];
        (completed, c)
    } else {
        let out = repair(
            &annotated,
            &completed,
            &session,
            backend,
            &RepairSettings {
                max_iterations: settings.max_fix_iterations,
                context_budget: settings.context_budget,
                flags,
                templates: &settings.templates,
            },
        );
        run.history = out.history;
        run.warnings.extend(out.warnings);
        if let Some(e) = out.provider_error {
            run.provider_failure = true;
            run.warnings.push(format!("repair stopped: {e}"));
        }
        (out.units, out.result)
    };
    art.json("repair-history.json", &run.history);
    finish(problem, &approach, sample, units, compile, &session, backend, settings, &art, run)
}

/// The single prompt of a baseline approach.
pub fn build_baseline_prompt(
    problem: &Problem,
    approach: &Approach,
    backend: &dyn Backend,
    templates: &Templates,
) -> String {
    let diagram = match approach {
        Approach::BaseRCd | Approach::BaseRCdFix => match emit_plantuml(&problem.model) {
            Ok(p) => render(&templates.baseline_plantuml, &[("plantuml", p.trim_end())]),
            Err(_) => String::new(),
        },
        _ => String::new(),
    };
    render(
        &templates.baseline,
        &[
            ("language", backend.language()),
            ("requirement", problem.requirement.trim()),
            ("plantuml", &diagram),
            ("language_guide", &templates.language_guide),
        ],
    )
}

pub fn run_baseline_sample(
    problem: &Problem,
    approach: &Approach,
    provider: &dyn ChatProvider,
    backend: &dyn Backend,
    sample: u32,
    settings: &PipelineSettings,
    dir: Option<&Path>,
) -> SampleRun {
    let art = Artifacts { dir: dir.map(Path::to_path_buf) };
    let session = session(provider, settings, sample, dir);
    let mut run = empty_run(problem, approach, sample);
    let prompt = build_baseline_prompt(problem, approach, backend, &settings.templates);
    let reply = match session.ask(Stage::Baseline, &prompt) {
        Ok(r) => r,
        Err(e) => return failed_run(problem, approach, sample, format!("generation failed: {e}"), true, &art),
    };
    let code = extract_code_block(&reply, Some(backend.language()), None).unwrap_or_else(|_| reply.clone());
    let units = match backend.split_units(&code) {
        Ok(u) if !u.is_empty() => u,
        _ => {
            run.warnings.push("reply does not split into units; kept as one file".into());
            vec![SourceUnit {
                path: format!("src/Generated.{}", backend.file_extension()),
                class_id: "Generated".into(),
                text: code,
            }]
        }
    };
    art.units("generated", &units);
    let (units, compile) = if *approach == Approach::BaseRCdFix {
        let flags = AblationFlags::default();
        let out = repair(
            &problem.model,
            &units,
            &session,
            backend,
            &RepairSettings {
                max_iterations: settings.max_fix_iterations,
                context_budget: settings.context_budget,
                flags: &flags,
                templates: &settings.templates,
            },
        );
        run.history = out.history;
        run.warnings.extend(out.warnings);
        if let Some(e) = out.provider_error {
            run.provider_failure = true;
            run.warnings.push(format!("repair stopped: {e}"));
        }
        (out.units, out.result)
    } else {
        let c = backend.compile_check(&units);
        run.history = vec![(0, c.diagnostics.len())];
        (units, c)
    };
    art.json("repair-history.json", &run.history);
    finish(problem, approach, sample, units, compile, &session, backend, settings, &art, run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approach_names_roundtrip() {
        let all = [
            Approach::Hybrid(AblationFlags::default()),
            Approach::Hybrid(AblationFlags { no_fix: true, no_context: true, ..Default::default() }),
            Approach::BaseR,
            Approach::BaseRCd,
            Approach::BaseRCdFix,
        ];
        for a in all {
            assert_eq!(a.to_string().parse::<Approach>().unwrap(), a);
        }
        assert_eq!(all[1].to_string(), "iecoregen+no-context+no-fix");
        assert!("base-r+no-fix".parse::<Approach>().is_err());
        assert!("gpt".parse::<Approach>().is_err());
        assert_eq!(Approach::BaseR.with_flags(AblationFlags { no_fix: true, ..Default::default() }), Approach::BaseR);
    }

    #[test]
    fn sections_split_on_headers() {
        let s = split_sections("intro\n### t1\n```\na\n```\n### `t2`\nb\n");
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].0, "t2");
        assert_eq!(s[0].1, "```\na\n```\n");
    }
}
