//! Thin HTTP JSON client for a hosted model. Configured by base URL, model
//! name, and the `TASER_API_KEY` environment variable; requests nothing
//! provider-specific beyond "return JSON".

use serde_json::json;

use super::{Backend, BackendError};

pub const API_KEY_ENV: &str = "TASER_API_KEY";

pub struct LiveBackend {
    base_url: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(base_url: &str, model: &str, api_key: &str) -> Self {
        LiveBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(120))
                .build(),
        }
    }

    /// Reads the API key from `TASER_API_KEY`.
    pub fn from_env(base_url: &str, model: &str) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| BackendError(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(base_url, model, &api_key))
    }
}

impl Backend for LiveBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = json!({
            "model": self.model,
            "messages": [ { "role": "user", "content": prompt } ],
            "response_format": { "type": "json_object" },
        });
        let response = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_json(body)
            .map_err(|e| BackendError(e.to_string()))?;
        let payload: serde_json::Value = response
            .into_json()
            .map_err(|e| BackendError(format!("invalid response body: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError("response carries no message content".to_string()))
    }

    fn name(&self) -> &'static str {
        "live"
    }
}
