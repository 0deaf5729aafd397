//! OpenAI-compatible chat-completion client.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendError, BackendIdentity, ChatBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Base URL up to, not including, `/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; no auth header when
    /// unset or empty.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "LIMP_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        if config.base_url.trim().is_empty() {
            return Err(BackendError::Config("base_url is empty".into()));
        }
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

/// Assistant text of a chat-completion response.
pub fn extract_completion_text(body: &Value) -> Result<String, BackendError> {
    if let Some(err) = body.get("error") {
        return Err(BackendError::Model(err.to_string()));
    }
    body.pointer("/choices/0/message/content")
        .or_else(|| body.pointer("/choices/0/text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Model(format!("response has no assistant text: {body}")))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        });
        let mut request = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Model(format!("response is not JSON: {e}")))?;
        extract_completion_text(&value)
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            backend: "http".into(),
            model: self.config.model.clone(),
        }
    }
}
