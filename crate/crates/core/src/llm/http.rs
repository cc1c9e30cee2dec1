use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{digest, ChatBackend, ChatRequest, ChatResponse, LlmError, Part, Role, TokenUsage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Client for the common chat-completion JSON dialect.
pub struct HttpBackend {
    id: String,
    endpoint: String,
    model: String,
    auth: Option<(String, String)>,
    supports_images: bool,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("id", &self.id)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fatal(String),
}

impl HttpBackend {
    /// `auth` is a header name and its full value; the value is never logged.
    pub fn new(
        id: impl Into<String>,
        base_url: &str,
        model: impl Into<String>,
        auth: Option<(String, String)>,
        supports_images: bool,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            id: id.into(),
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.into(),
            auth,
            supports_images,
            retry,
            client,
        })
    }

    pub fn body(&self, req: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": req.system_prompt})];
        for m in &req.messages {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            let content = if m.image_count() == 0 {
                Value::String(m.text())
            } else {
                Value::Array(
                    m.parts
                        .iter()
                        .map(|p| match p {
                            Part::Text(t) => json!({"type": "text", "text": t}),
                            Part::Image(img) => {
                                let b64 = base64::engine::general_purpose::STANDARD.encode(&img.png);
                                json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}})
                            }
                        })
                        .collect(),
                )
            };
            messages.push(json!({"role": role, "content": content}));
        }
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut builder = self.client.post(&self.endpoint).json(body);
        if let Some((name, value)) = &self.auth {
            builder = builder.header(name.as_str(), value.as_str());
        }
        let resp = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status();
        let text = resp.text().unwrap_or_default();
        if status.is_success() {
            return match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fatal(format!("malformed response body: {e}")),
            };
        }
        let snippet: String = text.chars().take(200).collect();
        let detail = format!("HTTP {}: {snippet}", status.as_u16());
        if status.as_u16() == 429 || status.is_server_error() {
            Attempt::Retry(detail)
        } else {
            Attempt::Fatal(detail)
        }
    }
}

fn parse_reply(v: &Value) -> Option<(String, TokenUsage)> {
    let message = v.get("choices")?.get(0)?.get("message")?;
    let text = match message.get("content")? {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect(),
        Value::Null => String::new(),
        _ => return None,
    };
    let usage = v.get("usage");
    let field = |name: &str| usage.and_then(|u| u.get(name)).and_then(Value::as_u64).unwrap_or(0);
    Some((
        text,
        TokenUsage {
            prompt: field("prompt_tokens"),
            completion: field("completion_tokens"),
        },
    ))
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn supports_images(&self) -> bool {
        self.supports_images
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = self.body(req);
        let start = Instant::now();
        let unavailable = |detail: String| LlmError::BackendUnavailable {
            backend: self.id.clone(),
            detail,
        };
        let mut last = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                let delay = self.retry.base_delay * 2u32.pow(attempt - 1);
                log::info!("{}: retry {attempt} of {} after {last}", req.request_tag, self.retry.max_retries);
                std::thread::sleep(delay);
            }
            match self.attempt(&body) {
                Attempt::Done(v) => {
                    let (text, usage) = parse_reply(&v).ok_or_else(|| unavailable("response has no choices[0].message.content".into()))?;
                    let error = text.is_empty().then(|| "empty completion".to_string());
                    return Ok(ChatResponse {
                        text,
                        usage,
                        latency_secs: start.elapsed().as_secs_f64(),
                        backend_id: self.id.clone(),
                        digest: digest(req),
                        error,
                    });
                }
                Attempt::Retry(detail) => last = detail,
                Attempt::Fatal(detail) => return Err(unavailable(detail)),
            }
        }
        Err(unavailable(format!("gave up after {} retries: {last}", self.retry.max_retries)))
    }
}
