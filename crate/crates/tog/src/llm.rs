//! Chat-completion client for remote language models.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tog_core::scoring::{ChatModel, ChatRequest, ModelSettings, ScoringError};

use crate::gate::Gate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct LlmConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    /// Transport retries per request.
    pub retries: u32,
    pub max_in_flight: usize,
    pub exploration_temperature: f64,
    pub reasoning_temperature: f64,
    pub max_tokens: u32,
    /// Re-asks after an unparsable reply.
    pub parse_retries: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: None,
            timeout_ms: 60_000,
            retries: 2,
            max_in_flight: 4,
            exploration_temperature: 0.4,
            reasoning_temperature: 0.0,
            max_tokens: 256,
            parse_retries: 2,
        }
    }
}

impl LlmConfig {
    pub fn settings(&self) -> ModelSettings {
        ModelSettings {
            exploration_temperature: self.exploration_temperature,
            reasoning_temperature: self.reasoning_temperature,
            max_tokens: self.max_tokens,
            parse_retries: self.parse_retries,
        }
    }
}

/// Request body for one completion.
pub fn request_body(model: &str, request: &ChatRequest<'_>) -> serde_json::Value {
    json!({
        "model": model,
        "messages": [{ "role": "user", "content": request.prompt }],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    })
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

/// Text of the first choice.
pub fn parse_completion(body: &str) -> Result<String, ScoringError> {
    let c: Completion =
        serde_json::from_str(body).map_err(|e| ScoringError::Protocol(format!("unexpected completion body: {e}")))?;
    c.choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| ScoringError::Protocol("completion has no choices".into()))
}

/// Clones share one in-flight cap.
#[derive(Clone)]
pub struct RemoteChatModel {
    agent: ureq::Agent,
    config: LlmConfig,
    api_key: Option<String>,
    gate: Arc<Gate>,
}

impl RemoteChatModel {
    pub fn new(config: LlmConfig) -> Result<Self, ScoringError> {
        if config.endpoint.is_empty() || config.model.is_empty() {
            return Err(ScoringError::Config("model endpoint and name are required".into()));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ScoringError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(Self {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_millis(config.timeout_ms)).build(),
            gate: Arc::new(Gate::new(config.max_in_flight)),
            api_key,
            config,
        })
    }

    pub fn settings(&self) -> ModelSettings {
        self.config.settings()
    }
}

impl ChatModel for RemoteChatModel {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ScoringError> {
        let _permit = self.gate.enter();
        let body = request_body(&self.config.model, request).to_string();
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 << (attempt - 1).min(8)));
            }
            let mut req = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            let reply = req.send_string(&body).map_err(|e| e.to_string());
            match reply.and_then(|r| r.into_string().map_err(|e| e.to_string())) {
                Ok(text) => return parse_completion(&text),
                Err(e) => {
                    log::warn!("model request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(ScoringError::Unavailable(last))
    }
}
