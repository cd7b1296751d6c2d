//! `hybridgen`: validate models, decompose requirements, generate skeletons,
//! run one pipeline sample, or evaluate a benchmark.
//!
//! Exit codes: 0 when the command completed, 1 on configuration or input
//! errors, 2 on chat provider failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use hybridgen::config::{BackendKind, ProviderMode, RunConfig};
use hybridgen::decompose::{decompose, passthrough_annotation, DecomposeError};
use hybridgen::eval::{load_bench, load_problem, run_eval, write_reports, EvalConfig};
use hybridgen::llm::Session;
use hybridgen::model::{parse_model, serialize_model, validate_model};
use hybridgen::pipeline::{AblationFlags, Approach};

#[derive(Parser, Debug)]
#[command(name = "hybridgen", version, about = "Template skeletons completed and repaired by chat models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for all artifacts.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["live", "record", "replay"])]
    provider_mode: Option<String>,
    /// Transcript file used by record and replay modes.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["minioo", "external"])]
    backend: Option<String>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    max_fix_iterations: Option<usize>,
    #[arg(long, global = true)]
    no_decompose: bool,
    #[arg(long, global = true)]
    no_compress: bool,
    #[arg(long, global = true)]
    no_context: bool,
    #[arg(long, global = true)]
    no_fix: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a class model; prints one line per violation.
    Validate { model: PathBuf },
    /// Annotate every operation of a model from a requirement.
    Decompose {
        model: PathBuf,
        requirement: PathBuf,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate the skeleton of an annotated model.
    Skeleton {
        model: PathBuf,
        /// Output directory; `<workspace>/skeleton` when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one sample of one approach on a problem directory.
    Run {
        problem: PathBuf,
        #[arg(long, default_value_t = 0)]
        sample: u32,
        #[arg(long, default_value = "iecoregen")]
        approach: String,
    },
    /// Evaluate approaches over a benchmark directory.
    Eval {
        bench: PathBuf,
        /// Repeatable; defaults to the configured list.
        #[arg(long = "approach")]
        approaches: Vec<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Repeatable.
        #[arg(long = "k")]
        ks: Vec<usize>,
        /// Report directory; `<workspace>/reports` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Marks an error as a chat provider failure (exit code 2).
#[derive(Debug)]
struct ProviderFailure(String);

impl std::fmt::Display for ProviderFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ProviderFailure {}

type CmdResult = anyhow::Result<()>;

fn load_config(g: &Global) -> anyhow::Result<RunConfig> {
    let mut c = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    c.apply_env(|k| std::env::var(k).ok())?;
    if let Some(w) = &g.workspace {
        c.workspace = w.clone();
    }
    if let Some(m) = &g.provider_mode {
        c.provider.mode = m.parse::<ProviderMode>().map_err(|e| anyhow!(e))?;
    }
    if let Some(t) = &g.transcript {
        c.provider.transcript = Some(t.clone());
    }
    if let Some(b) = &g.backend {
        c.backend.kind = b.parse::<BackendKind>().map_err(|e| anyhow!(e))?;
    }
    if let Some(j) = g.jobs {
        c.eval.jobs = j;
    }
    if let Some(m) = g.max_fix_iterations {
        c.pipeline.max_fix_iterations = m;
    }
    let a = &mut c.pipeline.ablation;
    a.no_decompose |= g.no_decompose;
    a.no_compress |= g.no_compress;
    a.no_context |= g.no_context;
    a.no_fix |= g.no_fix;
    Ok(c)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn cmd_validate(model: &Path) -> CmdResult {
    let m = parse_model(&read(model)?).with_context(|| format!("{}", model.display()))?;
    let violations = validate_model(&m);
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!("{}: ok ({} classes)", model.display(), m.classes.len());
    }
    Ok(())
}

fn cmd_decompose(cfg: &RunConfig, model: &Path, requirement: &Path, output: Option<&Path>) -> CmdResult {
    let m = parse_model(&read(model)?).with_context(|| format!("{}", model.display()))?;
    let req = read(requirement)?;
    let annotated = if cfg.pipeline.ablation.no_decompose {
        passthrough_annotation(&m, &req)?
    } else {
        cfg.validate()?;
        let settings = cfg.pipeline_settings()?;
        let provider = cfg.provider()?;
        let mut session =
            Session::new(provider.as_ref(), &settings.model_name, settings.temperature, settings.max_tokens, 0);
        session.system = settings.templates.system.clone();
        match decompose(&m, &req, &session, &settings.templates) {
            Ok((annotated, result)) => {
                for w in &result.warnings {
                    log::warn!("{w}");
                }
                annotated
            }
            Err(e @ DecomposeError::Provider(_)) => return Err(ProviderFailure(e.to_string()).into()),
            Err(e) => return Err(e.into()),
        }
    };
    let text = serialize_model(&annotated);
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_skeleton(cfg: &RunConfig, model: &Path, output: Option<&Path>) -> CmdResult {
    let m = parse_model(&read(model)?).with_context(|| format!("{}", model.display()))?;
    let backend = cfg.backend()?;
    let units = backend.generate_skeleton(&m)?;
    let dir = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.workspace.join("skeleton"));
    for u in &units {
        let path = dir.join(&u.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        std::fs::write(&path, &u.text).with_context(|| format!("cannot write {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn approach_of(name: &str, flags: AblationFlags) -> anyhow::Result<Approach> {
    Ok(name.parse::<Approach>().map_err(|e| anyhow!(e))?.with_flags(flags))
}

fn cmd_run(cfg: &RunConfig, problem_dir: &Path, sample: u32, approach: &str) -> CmdResult {
    cfg.validate()?;
    let problem = load_problem(problem_dir)?;
    let approach = approach_of(approach, cfg.pipeline.ablation)?;
    let settings = cfg.pipeline_settings()?;
    let provider = cfg.provider()?;
    let backend = cfg.backend()?;
    let dir = cfg.workspace.join(&problem.id).join(sample.to_string());
    let run = hybridgen::pipeline::run_sample(
        &problem,
        &approach,
        provider.as_ref(),
        backend.as_ref(),
        sample,
        &settings,
        Some(&dir),
    );
    println!("{}", serde_json::to_string(&run.record)?);
    println!("artifacts: {}", dir.display());
    if run.provider_failure {
        return Err(ProviderFailure(run.record.failure.unwrap_or_default()).into());
    }
    Ok(())
}

fn cmd_eval(
    cfg: &RunConfig,
    bench: &Path,
    approaches: &[String],
    n: Option<usize>,
    ks: &[usize],
    out: Option<&Path>,
) -> CmdResult {
    let mut cfg = cfg.clone();
    if let Some(n) = n {
        cfg.eval.n = n;
    }
    if !ks.is_empty() {
        cfg.eval.k = ks.to_vec();
    }
    if !approaches.is_empty() {
        cfg.eval.approaches = approaches.to_vec();
    }
    cfg.validate()?;
    let problems = load_bench(bench)?;
    if problems.is_empty() {
        return Err(anyhow!("no problems under {}", bench.display()));
    }
    let approaches = cfg
        .eval
        .approaches
        .iter()
        .map(|a| approach_of(a, cfg.pipeline.ablation))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let config = EvalConfig {
        approaches,
        n: cfg.eval.n,
        ks: cfg.eval.k.clone(),
        jobs: cfg.eval.jobs.max(1),
        settings: cfg.pipeline_settings()?,
    };
    let provider = cfg.provider()?;
    let backend = cfg.backend()?;
    let run = run_eval(&problems, &config, provider.as_ref(), backend.as_ref(), Some(&cfg.workspace))?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.workspace.join("reports"));
    let files = write_reports(&dir, &run)?;
    print!("{}", hybridgen::metrics::render_table(&run.report));
    for path in files.values() {
        println!("wrote {}", path.display());
    }
    if run.provider_failures > 0 {
        log::warn!("{} sample(s) hit provider failures", run.provider_failures);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = load_config(&cli.global).and_then(|cfg| match &cli.command {
        Command::Validate { model } => cmd_validate(model),
        Command::Decompose { model, requirement, output } => cmd_decompose(&cfg, model, requirement, output.as_deref()),
        Command::Skeleton { model, output } => cmd_skeleton(&cfg, model, output.as_deref()),
        Command::Run { problem, sample, approach } => cmd_run(&cfg, problem, *sample, approach),
        Command::Eval { bench, approaches, n, ks, out } => cmd_eval(&cfg, bench, approaches, *n, ks, out.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ProviderFailure>() => {
            eprintln!("provider error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
