use std::io::Write;
use std::time::{Duration, Instant};

use agentask_core::types::whitespace_tokens;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::GatewayError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage { role: role.into(), content: content.into() }
    }
}

/// Endpoint settings, read from `AGENTASK_GATEWAY_*` variables or a config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    /// Extra attempts after a transport failure or 5xx status.
    pub retries: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "clarifier".into(),
            api_key: None,
            max_tokens: 128,
            timeout_secs: 60,
            retries: 2,
        }
    }
}

impl GatewayConfig {
    /// Defaults overridden by `AGENTASK_GATEWAY_ENDPOINT`, `_MODEL` and `_API_KEY`.
    pub fn from_env() -> Self {
        let mut c = GatewayConfig::default();
        if let Ok(v) = std::env::var("AGENTASK_GATEWAY_ENDPOINT") {
            c.endpoint = v;
        }
        if let Ok(v) = std::env::var("AGENTASK_GATEWAY_MODEL") {
            c.model = v;
        }
        c.api_key = std::env::var("AGENTASK_GATEWAY_API_KEY").ok();
        c
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            messages,
            temperature: 0.0,
            max_tokens: self.max_tokens,
            timeout: Duration::from_secs(self.timeout_secs),
            api_key: self.api_key.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub endpoint: String,
    pub model: String,
    pub messages: Vec<ChatMessage>,
    /// Always 0 for reproducible decoding.
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub api_key: Option<String>,
}

impl ChatRequest {
    pub fn body(&self) -> Value {
        json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Counts were not reported by the endpoint and are whitespace-token estimates.
    pub estimated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub retry_count: u32,
    pub latency: Duration,
    pub usage: Usage,
}

/// Optional `.jsonl` mirror of every attempt.
pub struct WireLog<W: Write> {
    out: W,
}

impl<W: Write> WireLog<W> {
    pub fn new(out: W) -> Self {
        WireLog { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    fn record(&mut self, entry: Value) -> Result<(), GatewayError> {
        writeln!(self.out, "{entry}")?;
        Ok(())
    }
}

enum Attempt {
    Ok(String),
    Retryable(GatewayError),
    Fatal(GatewayError),
}

fn attempt(agent: &ureq::Agent, req: &ChatRequest, body: &str, attempts: u32) -> (Attempt, Option<u16>) {
    let mut call = agent.post(&req.endpoint).header("Content-Type", "application/json");
    if let Some(key) = &req.api_key {
        call = call.header("Authorization", &format!("Bearer {key}"));
    }
    match call.send(body) {
        Ok(mut resp) => {
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            if (200..300).contains(&status) {
                (Attempt::Ok(text), Some(status))
            } else {
                let err = GatewayError::Http { status, attempts, body: text };
                if status >= 500 || status == 429 {
                    (Attempt::Retryable(err), Some(status))
                } else {
                    (Attempt::Fatal(err), Some(status))
                }
            }
        }
        Err(e) => (Attempt::Retryable(GatewayError::Transport { attempts, message: e.to_string() }), None),
    }
}

fn parse_response(text: &str, req: &ChatRequest) -> Result<(String, Usage), GatewayError> {
    let v: Value = serde_json::from_str(text).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("no choices[0].message.content".into()))?
        .to_string();
    let reported = v.get("usage").and_then(|u| {
        Some((u.get("prompt_tokens")?.as_u64()?, u.get("completion_tokens")?.as_u64()?))
    });
    let usage = match reported {
        Some((p, c)) => Usage { prompt_tokens: p, completion_tokens: c, estimated: false },
        None => Usage {
            prompt_tokens: req.messages.iter().map(|m| u64::from(whitespace_tokens(&m.content))).sum(),
            completion_tokens: u64::from(whitespace_tokens(&content)),
            estimated: true,
        },
    };
    Ok((content, usage))
}

/// Sends `req` and returns the first choice, retrying idempotently on
/// transport failures and 5xx/429 statuses up to `retries` extra times.
pub fn chat_roundtrip<W: Write>(
    req: &ChatRequest,
    retries: u32,
    mut log: Option<&mut WireLog<W>>,
) -> Result<ChatResponse, GatewayError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(req.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let body = req.body().to_string();
    let start = Instant::now();
    let mut last = None;
    for n in 0..=retries {
        let t = Instant::now();
        let (outcome, status) = attempt(&agent, req, &body, n + 1);
        if let Some(log) = log.as_deref_mut() {
            let (ok, text) = match &outcome {
                Attempt::Ok(s) => (true, s.clone()),
                Attempt::Retryable(e) | Attempt::Fatal(e) => (false, e.to_string()),
            };
            log.record(json!({
                "attempt": n + 1,
                "endpoint": req.endpoint,
                "request": req.body(),
                "status": status,
                "ok": ok,
                "response": text,
                "latency_ms": t.elapsed().as_millis() as u64,
            }))?;
        }
        match outcome {
            Attempt::Ok(text) => {
                let (content, usage) = parse_response(&text, req)?;
                return Ok(ChatResponse { content, retry_count: n, latency: start.elapsed(), usage });
            }
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retryable(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}
