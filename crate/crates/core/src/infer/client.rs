//! Model clients: the chat-completion wire protocol over HTTP, and a
//! deterministic replay client for tests and hardware-free runs.
//!
//! The wire protocol is the common chat-completion shape: the request is
//! `{"model", "temperature": 0, "messages": [{"role": "user", "content":
//! <prompt>}]}` and the reply is read from `choices[0].message.content`
//! with token usage from `usage.prompt_tokens` / `usage.completion_tokens`.
//! Temperature is pinned to 0 and not configurable.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

/// Environment variable holding the optional bearer token for the HTTP
/// backend. Credentials never appear in config files.
pub const API_KEY_ENV: &str = "REQDEP_API_KEY";

/// Token usage reported by a backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One completion.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub content: String,
    pub usage: Usage,
}

/// A classification backend.
pub trait ModelClient: Send + Sync {
    fn model_name(&self) -> &str;

    /// Issue one temperature-0 completion for `prompt`.
    fn complete(&self, prompt: &str) -> Result<ModelResponse>;
}

/// Chat-completion client with retries and exponential backoff.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    retry_budget: u32,
    backoff_base: Duration,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(endpoint: &str, model: &str, retry_budget: u32) -> Result<HttpChatClient> {
        if retry_budget == 0 {
            return Err(Error::Config("retry budget must be >= 1".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("failed to build HTTP client: {e}")))?;
        Ok(HttpChatClient {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            retry_budget,
            backoff_base: Duration::from_millis(250),
            api_key: std::env::var(API_KEY_ENV).ok(),
            http,
        })
    }

    #[cfg(test)]
    pub fn with_backoff(mut self, base: Duration) -> HttpChatClient {
        self.backoff_base = base;
        self
    }
}

impl ModelClient for HttpChatClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<ModelResponse> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut last_error = String::new();
        for attempt in 0..self.retry_budget {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            let mut request = self.http.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if !status.is_success() {
                        last_error = format!("endpoint returned status {status}");
                        continue;
                    }
                    match response.json::<serde_json::Value>() {
                        Ok(value) => match extract_chat_reply(&value) {
                            Some(reply) => return Ok(reply),
                            None => {
                                last_error =
                                    "response lacks choices[0].message.content".to_string();
                            }
                        },
                        Err(e) => last_error = format!("response body is not JSON: {e}"),
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Error::Transport {
            attempts: self.retry_budget,
            message: last_error,
        })
    }
}

fn extract_chat_reply(value: &serde_json::Value) -> Option<ModelResponse> {
    let content = value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()?
        .to_string();
    let usage = Usage {
        prompt_tokens: value
            .pointer("/usage/prompt_tokens")
            .and_then(|v| v.as_u64())
            .unwrap_or(0),
        completion_tokens: value
            .pointer("/usage/completion_tokens")
            .and_then(|v| v.as_u64())
            .unwrap_or(0),
    };
    Some(ModelResponse { content, usage })
}

/// On-disk replay script: rules matched against the prompt first, then a
/// response queue consumed in request order, then the default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayScript {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub by_prompt_contains: Vec<ReplayRule>,
    #[serde(default)]
    pub responses: Vec<String>,
    #[serde(default)]
    pub default: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRule {
    pub needle: String,
    pub response: String,
}

/// Deterministic scripted backend. Token usage is derived from the actual
/// prompt and response lengths (whitespace tokens), so prompt-size effects
/// stay observable without a live model.
pub struct ReplayClient {
    model: String,
    rules: Vec<ReplayRule>,
    queue: Mutex<VecDeque<String>>,
    default: Option<String>,
    requests_served: Mutex<u64>,
}

impl ReplayClient {
    pub fn from_script(script: ReplayScript) -> ReplayClient {
        ReplayClient {
            model: script.model.unwrap_or_else(|| "replay".to_string()),
            rules: script.by_prompt_contains,
            queue: Mutex::new(script.responses.into()),
            default: script.default,
            requests_served: Mutex::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<ReplayClient> {
        let raw = fs::read_to_string(path)?;
        let script: ReplayScript = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(ReplayClient::from_script(script))
    }

    /// Queue-only client used by tests.
    pub fn from_responses<I, S>(responses: I) -> ReplayClient
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ReplayClient::from_script(ReplayScript {
            model: None,
            by_prompt_contains: Vec::new(),
            responses: responses.into_iter().map(Into::into).collect(),
            default: None,
        })
    }

    /// Client that answers every request identically.
    pub fn constant(response: &str) -> ReplayClient {
        ReplayClient::from_script(ReplayScript {
            model: None,
            by_prompt_contains: Vec::new(),
            responses: Vec::new(),
            default: Some(response.to_string()),
        })
    }

    pub fn requests_served(&self) -> u64 {
        *self.requests_served.lock().expect("replay counter poisoned")
    }
}

fn token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl ModelClient for ReplayClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<ModelResponse> {
        *self.requests_served.lock().expect("replay counter poisoned") += 1;
        let content = self
            .rules
            .iter()
            .find(|r| prompt.contains(&r.needle))
            .map(|r| r.response.clone())
            .or_else(|| self.queue.lock().expect("replay queue poisoned").pop_front())
            .or_else(|| self.default.clone())
            .ok_or_else(|| Error::Transport {
                attempts: 1,
                message: "replay script exhausted".into(),
            })?;
        Ok(ModelResponse {
            usage: Usage {
                prompt_tokens: token_count(prompt),
                completion_tokens: token_count(&content),
            },
            content,
        })
    }
}
