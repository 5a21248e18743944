use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Exemplar, QUESTION_MARKER};

/// Environment variable holding the bearer token for the remote generator.
pub const GENERATOR_KEY_ENV: &str = "CULTVQA_GENERATOR_KEY";

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("generator transport failure: {0}")]
    Transport(String),
    #[error("generator returned status {0}")]
    Status(u16),
    #[error("generator response is malformed: {0}")]
    Protocol(String),
}

/// A text-generation service. Implementations must be callable from
/// several threads at once.
pub trait GeneratorBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// HTTP client: POST `{"prompt": ...}`, expects `{"text": ...}`.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteGenerator {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        RemoteGenerator {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    /// Reads the API key from [`GENERATOR_KEY_ENV`] when set.
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        Self::new(endpoint, std::env::var(GENERATOR_KEY_ENV).ok())
    }
}

impl GeneratorBackend for RemoteGenerator {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = serde_json::to_string(&CompletionRequest { prompt }).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let mut req = self.agent.post(&self.endpoint).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => BackendError::Status(code),
            other => BackendError::Transport(other.to_string()),
        })?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let parsed: CompletionResponse = serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(parsed.text)
    }
}

/// Offline stand-in that answers with the program of the exemplar whose
/// question equals the prompt's final question, or nothing otherwise.
#[derive(Debug, Clone)]
pub struct ExemplarEchoBackend {
    exemplars: Vec<Exemplar>,
}

impl ExemplarEchoBackend {
    pub fn new(exemplars: Vec<Exemplar>) -> Self {
        ExemplarEchoBackend { exemplars }
    }
}

impl GeneratorBackend for ExemplarEchoBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let question = prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix(QUESTION_MARKER))
            .unwrap_or_default()
            .trim();
        Ok(self
            .exemplars
            .iter()
            .find(|e| e.question.trim() == question)
            .map(|e| e.program.clone())
            .unwrap_or_default())
    }
}
