use std::time::Duration;

use chrono::Utc;
use serde_json::{json, Value};

use super::{build_prompt, parse_candidates, Backend, BackendConfig, BatchProvenance, CandidateBatch, GenerationRequest};
use crate::error::{HaraError, Result};

/// Environment variable holding the bearer token for remote backends.
pub const API_KEY_ENV: &str = "HARA_API_KEY";

/// Chat-completions style adapter: POSTs `{model, messages, temperature}` and
/// reads `choices[0].message.content`.
pub struct RemoteBackend {
    config: BackendConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

enum Attempt {
    Retry(String),
    Fatal(HaraError),
}

impl RemoteBackend {
    pub fn new(config: BackendConfig, api_key: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(config.timeout_ms)).build();
        Ok(Self { config, api_key: api_key.into(), agent })
    }

    pub fn from_env(config: BackendConfig) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| HaraError::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::new(config, key)
    }

    fn model(&self) -> &str {
        self.config.model_name.as_deref().unwrap_or_default()
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Attempt> {
        let url = self.config.endpoint_url.as_deref().unwrap_or_default();
        let resp = self
            .agent
            .post(url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body.clone());
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) if code == 429 || code >= 500 => {
                return Err(Attempt::Retry(format!("HTTP {code} {}", r.status_text())))
            }
            Err(ureq::Error::Status(code, r)) => {
                return Err(Attempt::Fatal(HaraError::BackendUnavailable {
                    attempts: 1,
                    message: format!("HTTP {code} {}", r.status_text()),
                }))
            }
            Err(ureq::Error::Transport(t)) => return Err(Attempt::Retry(t.to_string())),
        };
        let text = resp.into_string().map_err(|e| Attempt::Retry(e.to_string()))?;
        // Prefer the chat-completions envelope; fall back to the raw body.
        let content = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_owned))
            .unwrap_or(text);
        Ok(content)
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.model())
    }

    fn generate(&self, req: &GenerationRequest) -> Result<CandidateBatch> {
        req.validate()?;
        let prompt = build_prompt(req.stage, &req.context)?;
        let mut body = json!({
            "model": self.model(),
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }

        let total = self.config.max_retries + 1;
        let mut last_error = String::new();
        let mut content = None;
        for attempt in 0..total {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(c) => {
                    content = Some(c);
                    break;
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("remote backend attempt {} of {total} failed: {msg}", attempt + 1);
                    last_error = msg;
                }
            }
        }
        let content = content.ok_or(HaraError::BackendUnavailable { attempts: total, message: last_error })?;
        let mut parsed = parse_candidates(req.stage, &content)?;
        for c in &mut parsed.items {
            c.template = format!("remote/{}/{}", self.model(), req.stage);
        }
        parsed.items.truncate(req.max_candidates);
        Ok(CandidateBatch {
            items: parsed.items,
            provenance: BatchProvenance {
                backend: self.id(),
                template: format!("prompt/{}", req.stage),
                timestamp: Utc::now(),
            },
            raw_response: Some(content),
            dropped: parsed.dropped,
        })
    }
}
