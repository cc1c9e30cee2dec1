use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{digest, normalize, ChatBackend, ChatRequest, ChatResponse, LlmError, NormalizedRequest};

/// One `<digest>.json` file per exchange.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredExchange {
    pub digest: String,
    pub request: NormalizedRequest,
    pub response: ChatResponse,
}

impl ReplayStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn load(&self, digest: &str) -> Option<StoredExchange> {
        let bytes = std::fs::read(self.path_for(digest)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(x) => Some(x),
            Err(e) => {
                log::warn!("corrupt replay entry {digest}: {e}");
                None
            }
        }
    }

    pub fn save(&self, req: &ChatRequest, response: &ChatResponse) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let d = digest(req);
        let entry = StoredExchange {
            digest: d.clone(),
            request: normalize(req),
            response: response.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, &entry)?;
        tmp.write_all(b"\n")?;
        tmp.persist(self.path_for(&d)).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.dir)
            .map(|rd| rd.filter_map(Result::ok).filter(|e| e.path().extension().is_some_and(|x| x == "json")).count())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Answers only from the store; a miss is an error, never a network call.
pub struct ReplayBackend {
    id: String,
    supports_images: bool,
    store: ReplayStore,
}

impl ReplayBackend {
    pub fn new(id: impl Into<String>, supports_images: bool, store: ReplayStore) -> Self {
        ReplayBackend {
            id: id.into(),
            supports_images,
            store,
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn supports_images(&self) -> bool {
        self.supports_images
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let d = digest(req);
        self.store.load(&d).map(|x| x.response).ok_or(LlmError::ReplayMiss {
            digest: d,
            tag: req.request_tag.clone(),
        })
    }
}

/// Forwards to `inner` and persists every successful exchange.
pub struct RecordingBackend {
    inner: Box<dyn ChatBackend>,
    store: ReplayStore,
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn ChatBackend>, store: ReplayStore) -> Self {
        RecordingBackend { inner, store }
    }
}

impl ChatBackend for RecordingBackend {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn supports_images(&self) -> bool {
        self.inner.supports_images()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let resp = self.inner.complete(req)?;
        if let Err(e) = self.store.save(req, &resp) {
            log::error!("failed to record {}: {e}", req.request_tag);
        }
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Message, MockBackend};

    fn req(text: &str) -> ChatRequest {
        ChatRequest {
            backend_id: "m".into(),
            system_prompt: "s".into(),
            messages: vec![Message::user(text)],
            temperature: 1.0,
            max_output_tokens: 10,
            seed: 0,
            request_tag: "t/generate/0".into(),
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let mock = MockBackend::new("m", false).respond("*", "answer");
        let rec = RecordingBackend::new(Box::new(mock.clone()), store.clone());
        let live = rec.complete(&req("q")).unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.path_for(&digest(&req("q"))).exists());

        let replay = ReplayBackend::new("m", false, store.clone());
        let again = replay.complete(&req("q")).unwrap();
        assert_eq!(again, live);
        assert_eq!(mock.calls(), 1);

        let mut other_tag = req("q");
        other_tag.request_tag = "elsewhere".into();
        assert_eq!(replay.complete(&other_tag).unwrap().text, "answer");
    }

    #[test]
    fn miss_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let replay = ReplayBackend::new("m", false, ReplayStore::new(dir.path()));
        let err = replay.complete(&req("never")).unwrap_err();
        assert_eq!(
            err,
            LlmError::ReplayMiss {
                digest: digest(&req("never")),
                tag: "t/generate/0".into()
            }
        );
    }

    #[test]
    fn stored_file_is_reviewable_json() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let r = req("q");
        let resp = MockBackend::new("m", false).respond("*", "a").complete(&r).unwrap();
        store.save(&r, &resp).unwrap();
        let text = std::fs::read_to_string(store.path_for(&digest(&r))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["request"]["messages"][0]["parts"][0]["text"], "q");
        assert_eq!(v["response"]["text"], "a");
    }
}
