//! Run configuration: a TOML file with sections, overridden by environment
//! variables, overridden by command-line flags (applied by the caller).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, ExternalBackend, MiniOoBackend, ToolConfig};
use crate::completion::DEFAULT_CONTEXT_BUDGET;
use crate::llm::{default_temperature, ChatProvider, HttpProvider, LlmError, RecordingProvider, ReplayProvider};
use crate::pipeline::{AblationFlags, Approach, PipelineSettings};
use crate::prompts::Templates;
use crate::repair::DEFAULT_MAX_ITERATIONS;

pub const ENV_PREFIX: &str = "HYBRIDGEN_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("provider setup failed: {0}")]
    Provider(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Record,
    #[default]
    Replay,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(ProviderMode::Live),
            "record" => Ok(ProviderMode::Record),
            "replay" => Ok(ProviderMode::Replay),
            other => Err(format!("unknown provider mode `{other}` (live, record, replay)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub endpoint: String,
    pub model: String,
    /// Unset means 0.8 when n > 1, else 0.2.
    pub temperature: Option<f64>,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub transcript: Option<PathBuf>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Replay,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "replay".into(),
            temperature: None,
            max_tokens: 4096,
            timeout_secs: 120,
            max_retries: 3,
            transcript: None,
            api_key_env: format!("{ENV_PREFIX}API_KEY"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Minioo,
    External,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "minioo" => Ok(BackendKind::Minioo),
            "external" => Ok(BackendKind::External),
            other => Err(format!("unknown backend `{other}` (minioo, external)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub tool: Option<ToolConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub max_fix_iterations: usize,
    pub context_char_budget: usize,
    #[serde(flatten)]
    pub ablation: AblationFlags,
    /// Directory of prompt template overrides.
    pub prompt_dir: Option<PathBuf>,
    pub canonical_tests: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_fix_iterations: DEFAULT_MAX_ITERATIONS,
            context_char_budget: DEFAULT_CONTEXT_BUDGET,
            ablation: AblationFlags::default(),
            prompt_dir: None,
            canonical_tests: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n: usize,
    pub k: Vec<usize>,
    pub jobs: usize,
    pub approaches: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { n: 5, k: vec![1, 3], jobs: 1, approaches: vec!["iecoregen".into()] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workspace: PathBuf,
    pub provider: ProviderConfig,
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            workspace: PathBuf::from("workspace"),
            provider: ProviderConfig::default(),
            backend: BackendConfig::default(),
            pipeline: PipelineConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path, origin: &Path) -> Result<RunConfig, ConfigError> {
        let mut c: RunConfig = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        resolve(base, &mut c.workspace);
        if let Some(t) = &mut c.provider.transcript {
            resolve(base, t);
        }
        if let Some(d) = &mut c.pipeline.prompt_dir {
            resolve(base, d);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base, path)
    }

    /// Applies `HYBRIDGEN_*` overrides read through `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(name: &str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e: T::Err| ConfigError::Env { name: name.to_string(), message: e.to_string() })
        }
        let var = |k: &str| {
            let name = format!("{ENV_PREFIX}{k}");
            get(&name).map(|v| (name, v))
        };
        if let Some((n, v)) = var("PROVIDER_MODE") {
            self.provider.mode = parsed(&n, &v)?;
        }
        if let Some((_, v)) = var("ENDPOINT") {
            self.provider.endpoint = v;
        }
        if let Some((_, v)) = var("MODEL") {
            self.provider.model = v;
        }
        if let Some((n, v)) = var("TEMPERATURE") {
            self.provider.temperature = Some(parsed(&n, &v)?);
        }
        if let Some((_, v)) = var("TRANSCRIPT") {
            self.provider.transcript = Some(PathBuf::from(v));
        }
        if let Some((_, v)) = var("WORKSPACE") {
            self.workspace = PathBuf::from(v);
        }
        if let Some((n, v)) = var("BACKEND") {
            self.backend.kind = parsed(&n, &v)?;
        }
        if let Some((n, v)) = var("JOBS") {
            self.eval.jobs = parsed(&n, &v)?;
        }
        if let Some((n, v)) = var("MAX_FIX_ITERATIONS") {
            self.pipeline.max_fix_iterations = parsed(&n, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.provider.mode == ProviderMode::Replay && self.provider.transcript.is_none() {
            return bad("replay mode needs a transcript path".into());
        }
        if self.provider.mode == ProviderMode::Record && self.provider.transcript.is_none() {
            return bad("record mode needs a transcript path".into());
        }
        if self.backend.kind == BackendKind::External && self.backend.tool.is_none() {
            return bad("the external backend needs a [backend.tool] section".into());
        }
        if let Some(t) = self.provider.temperature {
            if !(0.0..=2.0).contains(&t) {
                return bad(format!("temperature {t} outside [0, 2]"));
            }
        }
        if self.provider.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        if self.eval.n == 0 {
            return bad("n must be positive".into());
        }
        for &k in &self.eval.k {
            if k == 0 || k > self.eval.n {
                return bad(format!("k={k} outside 1..={}", self.eval.n));
            }
        }
        for a in &self.eval.approaches {
            a.parse::<Approach>().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    pub fn temperature(&self) -> f64 {
        self.provider.temperature.unwrap_or_else(|| default_temperature(self.eval.n))
    }

    pub fn pipeline_settings(&self) -> Result<PipelineSettings, ConfigError> {
        let templates = match &self.pipeline.prompt_dir {
            Some(d) => {
                Templates::load_overrides(d).map_err(|e| ConfigError::Invalid(format!("prompt templates: {e}")))?
            }
            None => Templates::default(),
        };
        Ok(PipelineSettings {
            model_name: self.provider.model.clone(),
            temperature: self.temperature(),
            max_tokens: self.provider.max_tokens,
            max_fix_iterations: self.pipeline.max_fix_iterations,
            context_budget: self.pipeline.context_char_budget,
            templates,
            canonical_tests: self.pipeline.canonical_tests,
        })
    }

    pub fn backend(&self) -> Result<Box<dyn Backend>, ConfigError> {
        Ok(match self.backend.kind {
            BackendKind::Minioo => Box::new(MiniOoBackend::default()),
            BackendKind::External => Box::new(ExternalBackend {
                inner: MiniOoBackend::default(),
                tool: self.backend.tool.clone().ok_or_else(|| ConfigError::Invalid("missing [backend.tool]".into()))?,
            }),
        })
    }

    /// The provider for the configured mode. Replay never opens a socket.
    pub fn provider(&self) -> Result<Arc<dyn ChatProvider>, ConfigError> {
        let live = || {
            let key = std::env::var(&self.provider.api_key_env).ok();
            if key.is_none() {
                log::warn!("{} is not set; sending requests without credentials", self.provider.api_key_env);
            }
            HttpProvider::new(
                &self.provider.endpoint,
                key,
                Duration::from_secs(self.provider.timeout_secs),
                self.provider.max_retries,
            )
        };
        let transcript =
            || self.provider.transcript.clone().ok_or_else(|| ConfigError::Invalid("no transcript path".into()));
        Ok(match self.provider.mode {
            ProviderMode::Live => Arc::new(live()),
            ProviderMode::Record => {
                let path = transcript()?;
                let at = |e: LlmError| ConfigError::Provider(format!("{}: {e}", path.display()));
                Arc::new(RecordingProvider::open(live(), &path).map_err(at)?)
            }
            ProviderMode::Replay => {
                let path = transcript()?;
                let at = |e: LlmError| ConfigError::Provider(format!("{}: {e}", path.display()));
                Arc::new(ReplayProvider::load(&path).map_err(at)?)
            }
        })
    }
}
