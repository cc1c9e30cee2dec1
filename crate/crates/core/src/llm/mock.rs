use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{digest, ChatBackend, ChatRequest, ChatResponse, LlmError, TokenUsage};

type Responder = Arc<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Canned responses keyed by request tag (`task/stage/run`). Script keys may use
/// `*` for any single segment; the key with the fewest wildcards wins.
#[derive(Clone)]
pub struct MockBackend {
    id: String,
    supports_images: bool,
    script: BTreeMap<String, String>,
    responder: Option<Responder>,
    calls: Arc<AtomicUsize>,
}

fn segment_match(pattern: &str, tag: &str) -> Option<usize> {
    let p: Vec<&str> = pattern.split('/').collect();
    let t: Vec<&str> = tag.split('/').collect();
    if pattern == "*" {
        return Some(usize::MAX / 2);
    }
    if p.len() != t.len() {
        return None;
    }
    let mut wild = 0;
    for (a, b) in p.iter().zip(&t) {
        if *a == "*" {
            wild += 1;
        } else if a != b {
            return None;
        }
    }
    Some(wild)
}

impl MockBackend {
    pub fn new(id: impl Into<String>, supports_images: bool) -> Self {
        MockBackend {
            id: id.into(),
            supports_images,
            script: BTreeMap::new(),
            responder: None,
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn with_script(mut self, script: BTreeMap<String, String>) -> Self {
        self.script = script;
        self
    }

    pub fn respond(mut self, key: impl Into<String>, text: impl Into<String>) -> Self {
        self.script.insert(key.into(), text.into());
        self
    }

    /// Computed responses, consulted before the script.
    pub fn with_responder(mut self, f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, req: &ChatRequest) -> Option<String> {
        if let Some(text) = self.responder.as_ref().and_then(|f| f(req)) {
            return Some(text);
        }
        self.script
            .iter()
            .filter_map(|(k, v)| segment_match(k, &req.request_tag).map(|w| (w, v)))
            .min_by_key(|(w, _)| *w)
            .map(|(_, v)| v.clone())
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn supports_images(&self) -> bool {
        self.supports_images
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.lookup(req).ok_or_else(|| LlmError::BackendUnavailable {
            backend: self.id.clone(),
            detail: format!("no scripted response for {}", req.request_tag),
        })?;
        let prompt_chars: usize = req.system_prompt.len() + req.messages.iter().map(|m| m.text().len()).sum::<usize>();
        Ok(ChatResponse {
            usage: TokenUsage {
                prompt: prompt_chars.div_ceil(4) as u64,
                completion: text.len().div_ceil(4) as u64,
            },
            error: text.is_empty().then(|| "empty completion".to_string()),
            text,
            latency_secs: 0.0,
            backend_id: self.id.clone(),
            digest: digest(req),
        })
    }
}
