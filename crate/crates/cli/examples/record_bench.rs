//! Rebuilds `<bench>/transcripts.jsonl` from the reference material shipped
//! with every problem:
//!
//! - `solution/decomposition.md` answers the decomposition prompt;
//! - `solution/<Class>.mo` holds the operation bodies of one class;
//! - `variants/<sample>/<Class>.mo` overrides a completion for one sample;
//! - `variants/no-context/` and `variants/no-decompose/` override completions
//!   of every other sample whose prompt lacks the context section or the
//!   decomposed method spec.
//!
//! Fix prompts are answered with the reference class. Baseline prompts are
//! answered with the reference program after a deterministic per-sample
//! mutation, so the baselines show the usual failure kinds.
//!
//! Usage: `cargo run -p hybridgen-cli --example record_bench [bench-dir]`

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use regex::Regex;

use hybridgen::backend::{Backend, SourceUnit};
use hybridgen::config::RunConfig;
use hybridgen::decompose::decompose;
use hybridgen::eval::{load_bench, run_eval, EvalConfig, Problem};
use hybridgen::llm::{ChatProvider, ChatRequest, LlmError, RecordingProvider, Session};
use hybridgen::metrics::render_table;
use hybridgen::model::ModelPackage;
use hybridgen::pipeline::{Approach, PipelineSettings};

const APPROACHES: [&str; 9] = [
    "iecoregen",
    "iecoregen+no-decompose",
    "iecoregen+no-compress",
    "iecoregen+no-context",
    "iecoregen+no-fix",
    "iecoregen+no-context+no-fix",
    "base-r",
    "base-r-cd",
    "base-r-cd-fix",
];

#[derive(Clone, Copy, Debug)]
enum Mutation {
    None,
    /// Calls an accessor that does not exist.
    Compile,
    /// Bumps the first integer literal of an operation body.
    Logic,
    /// Renames the first getter everywhere, so the program compiles but
    /// tests written against the model names do not.
    Api,
}

const BASE_R: [Mutation; 5] = [Mutation::Api, Mutation::Compile, Mutation::None, Mutation::Logic, Mutation::Api];
const BASE_R_CD: [Mutation; 5] =
    [Mutation::None, Mutation::Compile, Mutation::Logic, Mutation::None, Mutation::Compile];

struct Oracle {
    index: usize,
    decomposition: String,
    solution: BTreeMap<String, String>,
    variants: BTreeMap<(String, String), String>,
    /// Reference class text without comments, by class name.
    reference: BTreeMap<String, String>,
    program: String,
    /// (class, operation) whose body the baseline mutations touch.
    victim: (String, String),
}

fn fenced(code: &str) -> String {
    format!("Here is the code.\n\n```minioo\n{}\n```\n", code.trim_end())
}

fn strip_comments(text: &str) -> String {
    let docs = Regex::new(r"(?ms)^[ \t]*/\*\*.*?\*/[ \t]*\n").unwrap();
    let lines = Regex::new(r"(?m)^[ \t]*//.*\n").unwrap();
    lines.replace_all(&docs.replace_all(text, ""), "").into_owned()
}

/// Name of the first class declared inside the first fenced block.
fn prompt_class(prompt: &str) -> Option<String> {
    let re = Regex::new(r"(?m)^(?:abstract )?class (\w+)").unwrap();
    let start = prompt.find("```")?;
    re.captures(&prompt[start..]).map(|c| c[1].to_string())
}

fn read_classes(dir: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "mo") {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            out.insert(name, fs::read_to_string(&p)?);
        }
    }
    Ok(out)
}

/// Byte range of the body of `method <op>(` inside `class <class>`.
fn body_range(program: &str, class: &str, op: &str) -> Option<(usize, usize)> {
    let c = Regex::new(&format!(r"(?m)^(?:abstract )?class {class}\b")).unwrap().find(program)?.start();
    let m = c + program[c..].find(&format!("method {op}("))?;
    let open = m + program[m..].find('{')?;
    let mut depth = 0usize;
    for (i, ch) in program[open..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((open, open + i + 1));
                }
            }
            _ => {}
        }
    }
    None
}

impl Oracle {
    fn new(
        index: usize,
        problem: &Problem,
        backend: &dyn Backend,
        settings: &PipelineSettings,
    ) -> anyhow::Result<Oracle> {
        let dir = &problem.dir;
        let decomposition = fs::read_to_string(dir.join("solution/decomposition.md"))
            .with_context(|| format!("{}: missing solution/decomposition.md", problem.id))?;
        let solution = read_classes(&dir.join("solution"))?;
        let mut variants = BTreeMap::new();
        let vdir = dir.join("variants");
        if vdir.is_dir() {
            for e in fs::read_dir(&vdir)? {
                let p = e?.path();
                let key = p.file_name().unwrap().to_string_lossy().into_owned();
                for (class, text) in read_classes(&p)? {
                    variants.insert((key.clone(), class), text);
                }
            }
        }

        let answer = decomposition.clone();
        let fixed = move |_: &ChatRequest| -> Result<String, LlmError> { Ok(answer.clone()) };
        let session = Session::new(&fixed, &settings.model_name, settings.temperature, settings.max_tokens, 0);
        let (annotated, result) = decompose(&problem.model, &problem.requirement, &session, &settings.templates)?;
        if !result.unmatched.is_empty() || !result.warnings.is_empty() {
            bail!("{}: decomposition incomplete: {:?} {:?}", problem.id, result.unmatched, result.warnings);
        }
        let units = reference_units(&annotated, &solution, backend)?;
        let compiled = backend.compile_check(&units);
        if !compiled.ok {
            bail!("{}: reference does not compile: {:?}", problem.id, compiled.diagnostics);
        }
        let failed: Vec<_> = backend.run_tests(&units, &problem.canonical).into_iter().filter(|o| !o.passed).collect();
        if !failed.is_empty() {
            bail!("{}: reference fails tests: {failed:?}", problem.id);
        }

        let reference: BTreeMap<String, String> =
            units.iter().map(|u| (u.class_id.clone(), strip_comments(&u.text))).collect();
        let program = units.iter().map(|u| reference[&u.class_id].clone()).collect::<Vec<_>>().join("\n");
        let classes: Vec<&_> = annotated.classes.iter().filter(|c| !c.operations.is_empty()).collect();
        let victim_class = classes.get(index % classes.len().max(1)).ok_or_else(|| anyhow!("no operations"))?;
        let victim = (victim_class.name.clone(), victim_class.operations[0].name.clone());
        Ok(Oracle { index, decomposition, solution, variants, reference, program, victim })
    }

    fn mutate(&self, m: Mutation) -> String {
        let p = &self.program;
        let Some((s, e)) = body_range(p, &self.victim.0, &self.victim.1) else {
            return p.clone();
        };
        let body = &p[s..e];
        let new_body = match m {
            Mutation::None | Mutation::Api => body.to_string(),
            Mutation::Compile => {
                let getter = Regex::new(r"\bget([A-Z]\w*)\(\)").unwrap();
                if getter.is_match(body) {
                    getter.replace(body, "get${1}Value()").into_owned()
                } else {
                    body.replacen('{', "{\n    var pending: Int = pendingCount;", 1)
                }
            }
            Mutation::Logic => {
                let int = Regex::new(r"\b(\d+)\b").unwrap();
                int.replace(body, |c: &regex::Captures| (c[1].parse::<i64>().unwrap() + 1).to_string()).into_owned()
            }
        };
        let mut out = format!("{}{}{}", &p[..s], new_body, &p[e..]);
        if let Mutation::Api = m {
            let first = Regex::new(r"method get([A-Z]\w*)\(\)").unwrap();
            if let Some(c) = first.captures(&out) {
                let old = Regex::new(&format!(r"\bget{}\b", &c[1])).unwrap();
                out = old.replace_all(&out, format!("fetch{}", &c[1]).as_str()).into_owned();
            }
        }
        out
    }
}

fn reference_units(
    annotated: &ModelPackage,
    solution: &BTreeMap<String, String>,
    backend: &dyn Backend,
) -> anyhow::Result<Vec<SourceUnit>> {
    let mut units = backend.generate_skeleton(annotated)?;
    for u in &mut units {
        let Some(code) = solution.get(&u.class_id) else { continue };
        let done = SourceUnit { path: u.path.clone(), class_id: u.class_id.clone(), text: code.clone() };
        let targets = backend.operation_keys(annotated, &u.class_id);
        let (merged, report) = backend.merge(u, &done, &targets)?;
        if !report.rejected_edits.is_empty() {
            bail!("{}: rejected edits {:?}", u.class_id, report.rejected_edits);
        }
        *u = merged;
    }
    Ok(units)
}

impl ChatProvider for Oracle {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let u = &req.user;
        let unknown = || LlmError::InvalidRequest(format!("oracle cannot answer: {}", u.lines().next().unwrap_or("")));
        if u.contains("Operations to specify:") {
            return Ok(self.decomposition.clone());
        }
        if u.starts_with("Implement the following requirement") {
            let schedule = if u.contains("Class model (PlantUML)") { BASE_R_CD } else { BASE_R };
            let m = schedule[(req.sample_index as usize + self.index) % schedule.len()];
            return Ok(fenced(&self.mutate(m)));
        }
        let class = prompt_class(u).ok_or_else(unknown)?;
        if u.contains("does not compile.") {
            return self.reference.get(&class).map(|c| fenced(c)).ok_or_else(unknown);
        }
        if u.starts_with("Complete the") {
            let alternate = (req.sample_index as usize + self.index).is_multiple_of(2);
            let mut keys = vec![req.sample_index.to_string()];
            if alternate && !u.contains("Context (public methods") {
                keys.push("no-context".into());
            }
            if alternate && u.contains("* Algorithm:\n") {
                keys.push("no-decompose".into());
            }
            let code = keys
                .into_iter()
                .find_map(|k| self.variants.get(&(k, class.clone())))
                .or_else(|| self.solution.get(&class))
                .ok_or_else(unknown)?;
            return Ok(fenced(code));
        }
        Err(unknown())
    }
}

fn main() -> anyhow::Result<()> {
    let bench = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "bench".into()));
    let cfg = RunConfig::load(&bench.join("config.toml"))?;
    let settings = cfg.pipeline_settings()?;
    let backend = cfg.backend()?;
    let transcript = cfg.provider.transcript.clone().ok_or_else(|| anyhow!("config has no transcript path"))?;
    let problems = load_bench(&bench)?;
    let approaches =
        APPROACHES.iter().map(|a| a.parse::<Approach>().map_err(|e| anyhow!(e))).collect::<anyhow::Result<Vec<_>>>()?;
    if transcript.exists() {
        fs::remove_file(&transcript)?;
    }
    for (i, problem) in problems.iter().enumerate() {
        let oracle = Oracle::new(i, problem, backend.as_ref(), &settings)?;
        let recorder = RecordingProvider::open(oracle, &transcript)?.without_timestamps();
        let config = EvalConfig {
            approaches: approaches.clone(),
            n: cfg.eval.n,
            ks: cfg.eval.k.clone(),
            jobs: 1,
            settings: settings.clone(),
        };
        let run = run_eval(std::slice::from_ref(problem), &config, &recorder, backend.as_ref(), None)?;
        if run.provider_failures > 0 {
            bail!("{}: {} sample(s) hit oracle failures", problem.id, run.provider_failures);
        }
        println!("== {}", problem.id);
        print!("{}", render_table(&run.report));
    }
    println!("wrote {}", transcript.display());
    Ok(())
}
