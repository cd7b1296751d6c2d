//! Chat-completion providers (live HTTP, recording, replay) and fenced code
//! extraction.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TRANSCRIPT_SCHEMA: &str = "transcript";
pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failure (status {status}): {body}")]
    Transport { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("no recorded response for prompt digest {0}")]
    ReplayMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("no code found in response")]
    NoCodeFound,
    #[error("transcript: {0}")]
    Transcript(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub model: String,
    /// Within [0, 2].
    pub temperature: f64,
    pub max_tokens: u32,
    /// Distinguishes the n samples drawn for one prompt.
    pub sample_index: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical (sorted-key, fixed-precision) request.
    pub fn digest(&self) -> String {
        let canonical = json!({
            "model": self.model,
            "sample_index": self.sample_index,
            "system": self.system,
            "temperature": format!("{:.3}", self.temperature),
            "user": self.user,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_at: Option<u64>,
    pub prompt_chars: usize,
    pub response_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub digest: String,
    pub response: String,
    #[serde(default)]
    pub meta: RecordMeta,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

impl<F> ChatProvider for F
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        self(req)
    }
}

impl ChatProvider for Box<dyn ChatProvider> {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// OpenAI-compatible chat-completions client.
pub struct HttpProvider {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    sleeper: Sleeper,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fatal(LlmError),
}

impl HttpProvider {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration, max_retries: u32) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpProvider {
            endpoint: endpoint.to_string(),
            api_key,
            timeout,
            max_retries,
            backoff_base: Duration::from_millis(500),
            sleeper: Arc::new(std::thread::sleep),
            agent,
        }
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(LlmError::Timeout),
            Err(ureq::Error::Io(e)) => return Attempt::Retry(LlmError::Io(e)),
            Err(e) => return Attempt::Retry(LlmError::Protocol(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(LlmError::Timeout),
            Err(e) => return Attempt::Retry(LlmError::Protocol(e.to_string())),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(LlmError::Transport { status, body: text });
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(LlmError::Transport { status, body: text });
        }
        let parsed: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(LlmError::Protocol(e.to_string())),
        };
        match parsed.pointer("/choices/0/message/content").and_then(|c| c.as_str()) {
            Some(c) => Attempt::Done(c.to_string()),
            None => Attempt::Fatal(LlmError::Protocol("missing choices[0].message.content".into())),
        }
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        req.validate()?;
        let body = json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.max_retries => return Err(e),
                Attempt::Retry(e) => {
                    let delay = self.backoff_base * 2u32.saturating_pow(attempt);
                    log::warn!("chat request failed ({e}); retry {} in {delay:?}", attempt + 1);
                    (self.sleeper)(delay);
                    attempt += 1;
                }
            }
        }
    }
}

fn header_line() -> String {
    json!({"schema": TRANSCRIPT_SCHEMA, "version": TRANSCRIPT_VERSION}).to_string()
}

/// Reads a transcript file: a header line followed by one record per line.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, LlmError> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let Some(header) = lines.next().transpose()? else {
        return Ok(Vec::new());
    };
    let h: serde_json::Value =
        serde_json::from_str(&header).map_err(|e| LlmError::Transcript(format!("bad header: {e}")))?;
    if h["schema"] != TRANSCRIPT_SCHEMA || h["version"] != TRANSCRIPT_VERSION {
        return Err(LlmError::Transcript(format!("unsupported header {header}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| LlmError::Transcript(format!("line {}: {e}", i + 2)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Serves recorded responses by prompt digest. Never touches the network.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    index: HashMap<String, String>,
}

impl ReplayProvider {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::from_records(read_transcript(path)?))
    }

    /// Later records for the same digest win.
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        ReplayProvider { index: records.into_iter().map(|r| (r.digest, r.response)).collect() }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let d = req.digest();
        self.index.get(&d).cloned().ok_or(LlmError::ReplayMiss(d))
    }
}

/// Forwards to an inner provider and appends every new exchange to a
/// transcript file. Digests already present are not written twice.
pub struct RecordingProvider<P> {
    inner: P,
    timestamps: bool,
    writer: Mutex<(File, HashSet<String>)>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn open(inner: P, path: &Path) -> Result<Self, LlmError> {
        let existing =
            if path.exists() && std::fs::metadata(path)?.len() > 0 { read_transcript(path)? } else { Vec::new() };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() == 0 {
            writeln!(file, "{}", header_line())?;
        }
        Ok(RecordingProvider {
            inner,
            timestamps: true,
            writer: Mutex::new((file, existing.into_iter().map(|r| r.digest).collect())),
        })
    }

    /// Omits wall-clock timestamps so re-recording yields identical bytes.
    pub fn without_timestamps(mut self) -> Self {
        self.timestamps = false;
        self
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(req)?;
        let rec = TranscriptRecord {
            digest: req.digest(),
            response: response.clone(),
            meta: RecordMeta {
                recorded_at: self
                    .timestamps
                    .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())),
                prompt_chars: req.system.chars().count() + req.user.chars().count(),
                response_chars: response.chars().count(),
                note: None,
            },
        };
        let line = serde_json::to_string(&rec).map_err(|e| LlmError::Transcript(e.to_string()))?;
        let mut guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let (file, seen) = &mut *guard;
        if seen.insert(rec.digest) {
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        Ok(response)
    }
}

/// Temperature used when none is configured.
pub fn default_temperature(samples: usize) -> f64 {
    if samples > 1 {
        0.8
    } else {
        0.2
    }
}

/// Pipeline step that issued a chat call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Decompose,
    Complete,
    CompleteRetry,
    Fix,
    Baseline,
    TestGen,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decompose => "decompose",
            Stage::Complete => "complete",
            Stage::CompleteRetry => "complete-retry",
            Stage::Fix => "fix",
            Stage::Baseline => "baseline",
            Stage::TestGen => "test-gen",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    pub digest: String,
    pub prompt_chars: usize,
    pub response_chars: usize,
}

/// Per-sample view of a provider: fixes model, temperature and sample
/// index, and keeps a log of every call.
pub struct Session<'p> {
    provider: &'p dyn ChatProvider,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
    pub system: String,
    log_dir: Option<PathBuf>,
    calls: Mutex<Vec<CallRecord>>,
}

impl<'p> Session<'p> {
    pub fn new(
        provider: &'p dyn ChatProvider,
        model: &str,
        temperature: f64,
        max_tokens: u32,
        sample_index: u32,
    ) -> Self {
        Session {
            provider,
            model: model.to_string(),
            temperature,
            max_tokens,
            sample_index,
            system: crate::prompts::SYSTEM_PROMPT.to_string(),
            log_dir: None,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Persists every prompt and response under `dir`.
    pub fn with_log_dir(mut self, dir: PathBuf) -> Self {
        self.log_dir = Some(dir);
        self
    }

    pub fn request(&self, user: &str) -> ChatRequest {
        ChatRequest {
            system: self.system.clone(),
            user: user.to_string(),
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            sample_index: self.sample_index,
        }
    }

    pub fn ask(&self, stage: Stage, user: &str) -> Result<String, LlmError> {
        let req = self.request(user);
        let digest = req.digest();
        log::debug!("chat call {} sample {} digest {}", stage.as_str(), self.sample_index, &digest[..12]);
        let response = self.provider.complete(&req)?;
        let mut calls = self.calls.lock().unwrap_or_else(|e| e.into_inner());
        let seq = calls.len() + 1;
        calls.push(CallRecord {
            stage,
            digest,
            prompt_chars: user.chars().count(),
            response_chars: response.chars().count(),
        });
        drop(calls);
        if let Some(dir) = &self.log_dir {
            std::fs::create_dir_all(dir)?;
            let stem = format!("{seq:02}-{}", stage.as_str());
            std::fs::write(dir.join(format!("{stem}.prompt.txt")), user)?;
            std::fs::write(dir.join(format!("{stem}.response.txt")), &response)?;
        }
        Ok(response)
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).iter().filter(|c| c.stage == stage).count()
    }
}

fn fence_blocks(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut open: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match &mut open {
            None => {
                if let Some(info) = trimmed.strip_prefix("```") {
                    open = Some((info.trim().to_string(), Vec::new()));
                }
            }
            Some((tag, body)) => {
                if trimmed.starts_with("```") {
                    let mut code = body.join("\n");
                    code.push('\n');
                    out.push((std::mem::take(tag), code));
                    open = None;
                } else {
                    body.push(line);
                }
            }
        }
    }
    out
}

/// Code from a chat response: the first fenced block tagged `tag`, else the
/// first fenced block, else the whole text when `parses` accepts it.
pub fn extract_code_block(
    text: &str,
    tag: Option<&str>,
    parses: Option<&dyn Fn(&str) -> bool>,
) -> Result<String, LlmError> {
    let blocks = fence_blocks(text);
    if let Some(t) = tag {
        if let Some((_, body)) = blocks.iter().find(|(bt, _)| bt.eq_ignore_ascii_case(t)) {
            return Ok(body.clone());
        }
    }
    if let Some((_, body)) = blocks.into_iter().next() {
        return Ok(body);
    }
    if let Some(check) = parses {
        if !text.trim().is_empty() && check(text) {
            log::info!("using unfenced response as code");
            return Ok(text.to_string());
        }
    }
    Err(LlmError::NoCodeFound)
}
