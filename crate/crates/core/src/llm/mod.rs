//! Chat-completion clients behind one trait, with record/replay fixtures and
//! scripted mocks for offline runs.

mod config;
mod http;
mod limit;
mod mock;
mod replay;

pub use config::{BackendConfig, BackendKind, BackendsConfig, ImagePolicy, Registry, StoreMode};
pub use http::{HttpBackend, RetryPolicy};
pub use limit::Limited;
pub use mock::MockBackend;
pub use replay::{RecordingBackend, ReplayBackend, ReplayStore, StoredExchange};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image(Image),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            parts: vec![Part::Text(text.into())],
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            parts: vec![Part::Text(text.into())],
        }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect()
    }

    pub fn image_count(&self) -> usize {
        self.parts.iter().filter(|p| matches!(p, Part::Image(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub backend_id: String,
    pub system_prompt: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Run index; keeps repeated samples of one prompt distinct in the replay store.
    pub seed: u64,
    /// `task/stage/run`, used by scripted mocks and logs but not by the digest.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn image_count(&self) -> usize {
        self.messages.iter().map(Message::image_count).sum()
    }

    pub fn without_images(&self) -> ChatRequest {
        let mut r = self.clone();
        for m in &mut r.messages {
            m.parts.retain(|p| matches!(p, Part::Text(_)));
        }
        r
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest("negative temperature".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_secs: f64,
    pub backend_id: String,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("backend {backend} unavailable: {detail}")]
    BackendUnavailable { backend: String, detail: String },
    #[error("no recorded response for digest {digest} ({tag})")]
    ReplayMiss { digest: String, tag: String },
    #[error("backend {0} does not accept images")]
    ImageUnsupported(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Request in the stable form that is hashed and stored with fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRequest {
    pub backend_id: String,
    pub system_prompt: String,
    pub messages: Vec<NormalizedMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMessage {
    pub role: Role,
    pub parts: Vec<NormalizedPart>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizedPart {
    Text(String),
    ImageSha256(String),
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn normalize(req: &ChatRequest) -> NormalizedRequest {
    NormalizedRequest {
        backend_id: req.backend_id.clone(),
        system_prompt: req.system_prompt.clone(),
        messages: req
            .messages
            .iter()
            .map(|m| NormalizedMessage {
                role: m.role,
                parts: m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => NormalizedPart::Text(t.clone()),
                        Part::Image(i) => NormalizedPart::ImageSha256(sha256_hex(&i.png)),
                    })
                    .collect(),
            })
            .collect(),
        temperature: req.temperature,
        max_output_tokens: req.max_output_tokens,
        seed: req.seed,
    }
}

/// SHA-256 over the canonical JSON of the normalized request.
pub fn digest(req: &ChatRequest) -> String {
    let json = serde_json::to_vec(&normalize(req)).expect("normalized request serializes");
    sha256_hex(&json)
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn supports_images(&self) -> bool;
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Applies the image policy of a backend that cannot see images.
pub fn apply_image_policy(req: &ChatRequest, supports_images: bool, policy: ImagePolicy) -> Result<ChatRequest, LlmError> {
    if supports_images || req.image_count() == 0 {
        return Ok(req.clone());
    }
    match policy {
        ImagePolicy::Drop => {
            log::warn!("{}: dropping {} image(s) for text-only backend {}", req.request_tag, req.image_count(), req.backend_id);
            Ok(req.without_images())
        }
        ImagePolicy::Error => Err(LlmError::ImageUnsupported(req.backend_id.clone())),
    }
}
