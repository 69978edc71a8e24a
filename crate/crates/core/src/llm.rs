// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! LLM access: four-part prompt assembly, pluggable chat backends
//! (OpenAI-compatible HTTP, scripted, transcript replay), optional
//! transcript recording and token accounting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod http;

pub use http::HttpBackend;

/// Environment variable holding the API key for the HTTP backend.
pub const API_KEY_ENV: &str = "MIGRATEKIT_API_KEY";

pub const DEFAULT_TEMPERATURE: f64 = 0.4;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("script exhausted: no unconsumed entry matches prompt starting {0:?}")]
    ScriptExhausted(String),
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error("invalid LLM configuration: {0}")]
    Config(String),
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("transcript I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport { retryable: true, .. })
    }
}

/// The four prompt sections, in their fixed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    task_description: String,
    input_object: String,
    output_example: String,
    output_requirement: String,
}

impl PromptBundle {
    pub fn new(
        task_description: impl Into<String>,
        input_object: impl Into<String>,
        output_example: impl Into<String>,
        output_requirement: impl Into<String>,
    ) -> Result<Self, LlmError> {
        let b = PromptBundle {
            task_description: task_description.into(),
            input_object: input_object.into(),
            output_example: output_example.into(),
            output_requirement: output_requirement.into(),
        };
        for (name, part) in b.sections() {
            if part.trim().is_empty() {
                return Err(LlmError::InvalidPrompt(format!("empty {name}")));
            }
        }
        Ok(b)
    }

    pub fn task_description(&self) -> &str {
        &self.task_description
    }

    pub fn input_object(&self) -> &str {
        &self.input_object
    }

    pub fn output_example(&self) -> &str {
        &self.output_example
    }

    pub fn output_requirement(&self) -> &str {
        &self.output_requirement
    }

    fn sections(&self) -> [(&'static str, &str); 4] {
        [
            ("Task description", &self.task_description),
            ("Input object", &self.input_object),
            ("Output example", &self.output_example),
            ("Output requirement", &self.output_requirement),
        ]
    }
}

/// Joins the four sections under stable `## <Section>` headings.
pub fn assemble_prompt(bundle: &PromptBundle) -> String {
    bundle
        .sections()
        .iter()
        .map(|(name, body)| format!("## {name}\n{}\n", body.trim_end()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub requests: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            requests: self.requests + rhs.requests,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

/// Rough token count (four characters per token) for backends that do not
/// report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// Text identifying the request in transcripts.
    pub fn prompt_text(&self) -> String {
        match self.messages.as_slice() {
            [single] if single.role == Role::User => single.content.clone(),
            msgs => msgs
                .iter()
                .map(|m| {
                    let role = match m.role {
                        Role::System => "system",
                        Role::User => "user",
                        Role::Assistant => "assistant",
                    };
                    format!("[{role}]\n{}", m.content)
                })
                .collect::<Vec<_>>()
                .join("\n\n"),
        }
    }

    /// Content of the newest user message.
    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

pub trait LlmBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<BackendReply, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Substring that must occur in the newest user message; empty matches all.
    #[serde(rename = "match")]
    pub pattern: String,
    pub respond: String,
}

/// Answers from an ordered script: the first unconsumed entry whose pattern
/// occurs in the request wins and is consumed.
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    consumed: Mutex<Vec<bool>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let n = entries.len();
        ScriptedBackend {
            entries,
            consumed: Mutex::new(vec![false; n]),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(ScriptedBackend::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.consumed
            .lock()
            .expect("script lock")
            .iter()
            .filter(|c| !**c)
            .count()
    }
}

impl LlmBackend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let needle_in = request.last_user_content();
        let mut consumed = self.consumed.lock().expect("script lock");
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !consumed[*i] && needle_in.contains(&e.pattern));
        match hit {
            Some((i, entry)) => {
                consumed[i] = true;
                Ok(BackendReply {
                    text: entry.respond.clone(),
                    usage: None,
                })
            }
            None => Err(LlmError::ScriptExhausted(
                needle_in.chars().take(80).collect(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_digest: String,
    pub prompt_text: String,
    pub response_text: String,
    pub token_usage: TokenUsage,
}

/// Recorded request/response pairs, stored one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        Transcript::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| LlmError::Config(format!("transcript line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Transcript { entries })
    }

    pub fn to_document(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }
}

/// Plays back a transcript. Requests are answered by the first unconsumed
/// entry with the same digest, falling back to the next unconsumed entry
/// with a warning, since prompts can embed run-varying state.
pub struct ReplayBackend {
    entries: Vec<TranscriptEntry>,
    consumed: Mutex<Vec<bool>>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        let n = transcript.entries.len();
        ReplayBackend {
            entries: transcript.entries,
            consumed: Mutex::new(vec![false; n]),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(ReplayBackend::new(Transcript::load(path)?))
    }
}

impl LlmBackend for ReplayBackend {
    fn chat(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let want = digest(&request.prompt_text());
        let mut consumed = self.consumed.lock().expect("replay lock");
        let exact = (0..self.entries.len())
            .find(|&i| !consumed[i] && self.entries[i].request_digest == want);
        let idx = match exact {
            Some(i) => i,
            None => {
                let i = (0..self.entries.len())
                    .find(|&i| !consumed[i])
                    .ok_or_else(|| {
                        LlmError::ReplayMismatch(format!(
                            "transcript exhausted after {} entries",
                            self.entries.len()
                        ))
                    })?;
                tracing::warn!(entry = i, "replayed request digest differs from the recording");
                i
            }
        };
        consumed[idx] = true;
        let e = &self.entries[idx];
        Ok(BackendReply {
            text: e.response_text.clone(),
            usage: Some(e.token_usage),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Http {
        endpoint: String,
        model: String,
        /// Name of the environment variable holding the key.
        api_key_env: String,
    },
    Scripted(PathBuf),
    Replay(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub backend: BackendSpec,
    pub temperature: f64,
    pub max_attempts_per_request: u32,
    pub request_timeout: Duration,
}

impl LlmConfig {
    pub fn new(backend: BackendSpec) -> Self {
        LlmConfig {
            backend,
            temperature: DEFAULT_TEMPERATURE,
            max_attempts_per_request: 3,
            request_timeout: Duration::from_secs(120),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_attempts_per_request == 0 {
            return Err(LlmError::Config("max_attempts_per_request must be ≥ 1".into()));
        }
        Ok(())
    }
}

struct Recorder {
    out: BufWriter<File>,
}

/// Result of one gateway request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

/// Shared LLM entry point; safe to use from several migration tasks.
pub struct Gateway {
    backend: Box<dyn LlmBackend>,
    temperature: f64,
    max_attempts: u32,
    retry_delay: Duration,
    recorder: Option<Mutex<Recorder>>,
}

impl Gateway {
    pub fn new(backend: Box<dyn LlmBackend>) -> Self {
        Gateway {
            backend,
            temperature: DEFAULT_TEMPERATURE,
            max_attempts: 3,
            retry_delay: Duration::from_millis(200),
            recorder: None,
        }
    }

    pub fn from_config(config: &LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let backend: Box<dyn LlmBackend> = match &config.backend {
            BackendSpec::Http {
                endpoint,
                model,
                api_key_env,
            } => Box::new(HttpBackend::new(
                endpoint,
                model,
                std::env::var(api_key_env).ok(),
                config.request_timeout,
            )?),
            BackendSpec::Scripted(path) => Box::new(ScriptedBackend::from_file(path)?),
            BackendSpec::Replay(path) => Box::new(ReplayBackend::from_file(path)?),
        };
        Ok(Gateway::new(backend)
            .with_temperature(config.temperature)
            .with_max_attempts(config.max_attempts_per_request))
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_attempts(mut self, attempts: u32) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    pub fn with_retry_delay(mut self, delay: Duration) -> Self {
        self.retry_delay = delay;
        self
    }

    /// Appends every completed request to a transcript file at `path`.
    pub fn record_to(mut self, path: &Path) -> Result<Self, LlmError> {
        let out = BufWriter::new(File::create(path)?);
        self.recorder = Some(Mutex::new(Recorder { out }));
        Ok(self)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        self.converse(vec![ChatMessage::user(prompt)])
    }

    pub fn converse(&self, messages: Vec<ChatMessage>) -> Result<Completion, LlmError> {
        let request = ChatRequest {
            temperature: self.temperature,
            messages,
        };
        let mut attempt = 0;
        let reply = loop {
            attempt += 1;
            match self.backend.chat(&request) {
                Ok(r) => break r,
                Err(e) if e.is_retryable() && attempt < self.max_attempts => {
                    tracing::warn!(attempt, error = %e, "retrying LLM request");
                    std::thread::sleep(self.retry_delay * attempt);
                }
                Err(e) => return Err(e),
            }
        };
        let prompt_text = request.prompt_text();
        let usage = reply.usage.unwrap_or_else(|| TokenUsage {
            prompt_tokens: estimate_tokens(&prompt_text),
            completion_tokens: estimate_tokens(&reply.text),
            requests: 1,
        });
        let usage = TokenUsage { requests: 1, ..usage };
        if let Some(rec) = &self.recorder {
            let entry = TranscriptEntry {
                request_digest: digest(&prompt_text),
                prompt_text,
                response_text: reply.text.clone(),
                token_usage: usage,
            };
            let mut rec = rec.lock().expect("recorder lock");
            serde_json::to_writer(&mut rec.out, &entry).map_err(std::io::Error::from)?;
            rec.out.write_all(b"\n")?;
            rec.out.flush()?;
        }
        Ok(Completion {
            text: reply.text,
            usage,
        })
    }
}

/// A task's view of the gateway that accumulates its own token usage.
pub struct LlmSession<'g> {
    gateway: &'g Gateway,
    usage: TokenUsage,
}

impl<'g> LlmSession<'g> {
    pub fn new(gateway: &'g Gateway) -> Self {
        LlmSession {
            gateway,
            usage: TokenUsage::default(),
        }
    }

    pub fn usage(&self) -> TokenUsage {
        self.usage
    }

    /// Single-message request.
    pub fn ask(&mut self, prompt: &str) -> Result<String, LlmError> {
        let c = self.gateway.complete(prompt)?;
        self.usage += c.usage;
        Ok(c.text)
    }

    /// Follow-up turn carrying the previous answer and a feedback message.
    pub fn follow_up(
        &mut self,
        prompt: &str,
        previous: &str,
        feedback: &str,
    ) -> Result<String, LlmError> {
        let c = self.gateway.converse(vec![
            ChatMessage::user(prompt),
            ChatMessage::assistant(previous),
            ChatMessage::user(feedback),
        ])?;
        self.usage += c.usage;
        Ok(c.text)
    }
}
