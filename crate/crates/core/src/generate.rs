//! Sampling candidate programs from an OpenAI-compatible chat endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::task::{Candidate, Task};

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Solve the following programming problem in Python 3. \
The program must read from standard input and write to standard output. \
Put the complete program in a single fenced code block at the end of your answer.\n\n{prompt}";

/// Environment variable holding the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "FMV_API_KEY";

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("task `{0}` has an empty prompt")]
    EmptyPrompt(String),
    #[error("task `{task_id}`: request failed after {attempts} attempts: {message}")]
    Request {
        task_id: String,
        attempts: u32,
        message: String,
    },
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub n_samples: usize,
    pub request_timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub concurrency: usize,
    pub prompt_template: String,
    pub think_open: String,
    pub think_close: String,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "Qwen/Qwen3-4B-Instruct-2507".into(),
            temperature: 0.6,
            top_p: 0.95,
            max_new_tokens: 8192,
            n_samples: 64,
            request_timeout_ms: 600_000,
            max_retries: 3,
            backoff_base_ms: 500,
            concurrency: 4,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            think_open: "<think>".into(),
            think_close: "</think>".into(),
            api_key: None,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: &str| Err(GenerationError::InvalidConfig(m.into()));
        // Written so that NaN fails too.
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) || self.top_p.is_nan() {
            return bad("top_p must be in (0, 1]");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be >= 1");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be >= 1");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be >= 1");
        }
        if self.endpoint_url.is_empty() {
            return bad("endpoint_url is empty");
        }
        Ok(())
    }

    /// Full URL of the chat-completions route.
    pub fn completions_url(&self) -> String {
        let base = self.endpoint_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    pub fn render_prompt(&self, task: &Task) -> String {
        self.prompt_template.replace("{prompt}", &task.prompt)
    }

    fn request_body(&self, prompt: &str, n: usize) -> serde_json::Value {
        json!({
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_new_tokens,
            "n": n,
        })
    }
}

/// Stable candidate id for sample `index` of a task.
pub fn candidate_id(task_id: &str, index: usize) -> String {
    format!("{task_id}/{index}")
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    /// Worth retrying: transport trouble, 429, 5xx.
    Transient(String),
    /// The server understood and refused.
    Rejected(u16, String),
}

struct ChatClient<'a> {
    http: reqwest::blocking::Client,
    cfg: &'a SamplingConfig,
    url: String,
}

impl<'a> ChatClient<'a> {
    fn new(cfg: &'a SamplingConfig) -> Result<Self, GenerationError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.request_timeout_ms))
            .build()?;
        Ok(Self {
            http,
            cfg,
            url: cfg.completions_url(),
        })
    }

    fn attempt(&self, prompt: &str, n: usize) -> Result<Vec<String>, Failure> {
        let mut req = self
            .http
            .post(&self.url)
            .json(&self.cfg.request_body(prompt, n));
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Failure::Rejected(status.as_u16(), body));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| Failure::Transient(format!("unreadable response: {e}")))?;
        let mut choices: Vec<(usize, String)> = parsed
            .choices
            .into_iter()
            .enumerate()
            .map(|(pos, c)| {
                (
                    c.index.unwrap_or(pos),
                    c.message.content.unwrap_or_default(),
                )
            })
            .collect();
        choices.sort_by_key(|(i, _)| *i);
        Ok(choices.into_iter().map(|(_, text)| text).collect())
    }

    /// Retries transient failures with exponential backoff.
    fn request(&self, prompt: &str, n: usize) -> Result<Vec<String>, Failure> {
        let mut attempt = 0u32;
        loop {
            match self.attempt(prompt, n) {
                Err(Failure::Transient(_)) if attempt < self.cfg.max_retries => {
                    let wait = self
                        .cfg
                        .backoff_base_ms
                        .saturating_mul(1 << attempt.min(16));
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn request_error(task_id: &str, cfg: &SamplingConfig, f: Failure) -> GenerationError {
    let (attempts, message) = match f {
        Failure::Transient(m) => (cfg.max_retries + 1, m),
        Failure::Rejected(code, body) => (1, format!("HTTP {code}: {body}")),
    };
    GenerationError::Request {
        task_id: task_id.to_string(),
        attempts,
        message,
    }
}

/// Draws `n_samples` completions for a task and extracts one program from
/// each. A completion without recognizable code becomes a candidate with
/// empty source, which later fails validity.
///
/// One request with `n = n_samples` is tried first; any shortfall (or a
/// server that rejects `n > 1`) is filled by single-sample requests with at
/// most `concurrency` in flight.
pub fn sample_candidates(
    task: &Task,
    cfg: &SamplingConfig,
) -> Result<Vec<Candidate>, GenerationError> {
    cfg.validate()?;
    if task.prompt.trim().is_empty() {
        return Err(GenerationError::EmptyPrompt(task.task_id.clone()));
    }
    let client = ChatClient::new(cfg)?;
    let prompt = cfg.render_prompt(task);
    let n = cfg.n_samples;

    let mut texts: Vec<String> = Vec::with_capacity(n);
    if n > 1 {
        match client.request(&prompt, n) {
            Ok(batch) => texts.extend(batch.into_iter().take(n)),
            Err(Failure::Rejected(code, _)) if (400..500).contains(&code) => {}
            Err(f) => return Err(request_error(&task.task_id, cfg, f)),
        }
    }

    let missing = n - texts.len();
    if missing > 0 {
        let slots: Vec<Mutex<Option<String>>> = (0..missing).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let failure: Mutex<Option<Failure>> = Mutex::new(None);
        thread::scope(|scope| {
            for _ in 0..cfg.concurrency.min(missing) {
                scope.spawn(|| loop {
                    if failure.lock().unwrap().is_some() {
                        return;
                    }
                    let slot = next.fetch_add(1, Ordering::SeqCst);
                    if slot >= missing {
                        return;
                    }
                    match client.request(&prompt, 1) {
                        Ok(mut batch) => {
                            *slots[slot].lock().unwrap() = Some(if batch.is_empty() {
                                String::new()
                            } else {
                                batch.swap_remove(0)
                            });
                        }
                        Err(f) => {
                            failure.lock().unwrap().get_or_insert(f);
                            return;
                        }
                    }
                });
            }
        });
        if let Some(f) = failure.into_inner().unwrap() {
            return Err(request_error(&task.task_id, cfg, f));
        }
        texts.extend(
            slots
                .into_iter()
                .map(|s| s.into_inner().unwrap().unwrap_or_default()),
        );
    }

    Ok(texts
        .iter()
        .enumerate()
        .map(|(i, text)| Candidate {
            candidate_id: candidate_id(&task.task_id, i),
            task_id: task.task_id.clone(),
            sample_index: i,
            source: extract_code(text, &cfg.think_open, &cfg.think_close).unwrap_or_default(),
        })
        .collect())
}

/// Pulls the program out of a model response.
///
/// A leading reasoning segment between `think_open` and `think_close` is
/// dropped first. The last fenced block wins; without fences the remaining
/// text is returned only if it reads like code.
pub fn extract_code(response: &str, think_open: &str, think_close: &str) -> Option<String> {
    let body = strip_reasoning(response, think_open, think_close)?;
    if let Some(block) = last_fenced_block(body) {
        return Some(block);
    }
    let text = body.trim();
    if text.is_empty() || !text.lines().any(looks_like_code) {
        return None;
    }
    Some(text.to_string())
}

fn strip_reasoning<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    if open.is_empty() || close.is_empty() {
        return Some(text);
    }
    let trimmed = text.trim_start();
    if let Some(rest) = trimmed.strip_prefix(open) {
        // An unterminated segment means the answer was cut off mid-thought.
        return rest.find(close).map(|end| &rest[end + close.len()..]);
    }
    // Some chat templates emit only the closing tag.
    match (text.find(close), text.find(open)) {
        (Some(end), None) => Some(&text[end + close.len()..]),
        _ => Some(text),
    }
}

fn last_fenced_block(text: &str) -> Option<String> {
    let mut blocks: Vec<String> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    // A trailing unterminated fence is a truncated final block.
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
        .into_iter()
        .rev()
        .map(|b| b.trim_matches('\n').trim_end().to_string())
        .find(|b| !b.trim().is_empty())
}

fn looks_like_code(line: &str) -> bool {
    const KEYWORDS: &[&str] = &[
        "import ", "from ", "def ", "class ", "print(", "for ", "while ", "if ", "elif ", "else:",
        "return", "try:", "except", "with ", "#include", "int main", "fn ", "let ", "const ",
        "using ", "public ", "package ",
    ];
    let l = line.trim();
    if l.is_empty() {
        return false;
    }
    KEYWORDS.iter().any(|k| l.starts_with(k))
        || l.contains(" = ")
        || l.contains("==")
        || l.contains("()")
        || l.ends_with(';')
        || l.ends_with('{')
        || l.ends_with('}')
}
