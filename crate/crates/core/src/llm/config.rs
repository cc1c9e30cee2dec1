use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    apply_image_policy, ChatBackend, ChatRequest, ChatResponse, HttpBackend, Limited, LlmError, MockBackend, RecordingBackend,
    ReplayBackend, ReplayStore, RetryPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagePolicy {
    #[default]
    Drop,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    pub model: String,
    pub base_url: String,
    /// Name of the environment variable holding the credential.
    pub auth_env: Option<String>,
    pub auth_header: String,
    pub auth_prefix: String,
    pub supports_images: bool,
    pub image_policy: ImagePolicy,
    pub max_concurrency: usize,
    pub requests_per_minute: Option<f64>,
    pub max_retries: u32,
    pub retry_base_delay_secs: f64,
    pub request_timeout_secs: f64,
    /// Mock only: tag pattern → response text.
    pub script: BTreeMap<String, String>,
    /// Mock only: TOML file with more script entries, relative to the config file.
    pub script_file: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            id: String::new(),
            kind: BackendKind::Live,
            model: String::new(),
            base_url: "https://api.openai.com/v1".into(),
            auth_env: None,
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            supports_images: true,
            image_policy: ImagePolicy::Drop,
            max_concurrency: 4,
            requests_per_minute: None,
            max_retries: 3,
            retry_base_delay_secs: 1.0,
            request_timeout_secs: 300.0,
            script: BTreeMap::new(),
            script_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    /// Backends run on their own in baseline mode; empty means all.
    pub baselines: Vec<String>,
    /// Backends whose thoughts form the assessor's pool; empty means all.
    pub generators: Vec<String>,
    /// Backends used as assessors; empty means all.
    pub assessors: Vec<String>,
    pub generator_temperature: f64,
    pub assessor_temperature: f64,
    pub max_output_tokens: u32,
    pub backend: Vec<BackendConfig>,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        BackendsConfig {
            baselines: Vec::new(),
            generators: Vec::new(),
            assessors: Vec::new(),
            generator_temperature: 1.0,
            assessor_temperature: 0.2,
            max_output_tokens: 4096,
            backend: Vec::new(),
        }
    }
}

impl BackendsConfig {
    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        let cfg: BackendsConfig = toml::from_str(text).map_err(|e| LlmError::Config(format!("backends config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads the file and resolves mock `script_file` entries against its directory.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for b in &mut cfg.backend {
            if let Some(f) = b.script_file.take() {
                let full = base.join(&f);
                let text = std::fs::read_to_string(&full).map_err(|e| LlmError::Config(format!("cannot read {}: {e}", full.display())))?;
                let extra: BTreeMap<String, String> =
                    toml::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", full.display())))?;
                for (k, v) in extra {
                    b.script.entry(k).or_insert(v);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.backend.is_empty() {
            return Err(LlmError::Config("no [[backend]] entries".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.backend {
            if b.id.is_empty() {
                return Err(LlmError::Config("backend with empty id".into()));
            }
            if !seen.insert(b.id.as_str()) {
                return Err(LlmError::Config(format!("duplicate backend id {}", b.id)));
            }
            if b.kind == BackendKind::Live && b.model.is_empty() {
                return Err(LlmError::Config(format!("backend {} needs a model name", b.id)));
            }
        }
        for id in self.baselines.iter().chain(&self.generators).chain(&self.assessors) {
            if !seen.contains(id.as_str()) {
                return Err(LlmError::Config(format!("unknown backend id {id} in baselines/generators/assessors")));
            }
        }
        if !(self.generator_temperature >= 0.0 && self.assessor_temperature >= 0.0) {
            return Err(LlmError::Config("temperatures must be non-negative".into()));
        }
        Ok(())
    }

    fn or_all(&self, ids: &[String]) -> Vec<String> {
        if ids.is_empty() {
            self.backend.iter().map(|b| b.id.clone()).collect()
        } else {
            ids.to_vec()
        }
    }

    pub fn baseline_ids(&self) -> Vec<String> {
        self.or_all(&self.baselines)
    }

    pub fn generator_ids(&self) -> Vec<String> {
        self.or_all(&self.generators)
    }

    pub fn assessor_ids(&self) -> Vec<String> {
        self.or_all(&self.assessors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreMode {
    Live,
    Record(PathBuf),
    Replay(PathBuf),
}

struct Entry {
    backend: Box<dyn ChatBackend>,
    policy: ImagePolicy,
}

/// Backends by id, with the image policy applied before every call.
pub struct Registry {
    entries: BTreeMap<String, Entry>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, backend: Box<dyn ChatBackend>, policy: ImagePolicy) {
        self.entries.insert(backend.id().to_string(), Entry { backend, policy });
    }

    /// `env` resolves credential variables; in replay mode no backend is contacted
    /// and no credential is needed.
    pub fn build(cfg: &BackendsConfig, mode: &StoreMode, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        cfg.validate()?;
        let mut reg = Registry::empty();
        for b in &cfg.backend {
            let backend: Box<dyn ChatBackend> = match mode {
                StoreMode::Replay(dir) => Box::new(ReplayBackend::new(&b.id, b.supports_images, ReplayStore::new(dir))),
                StoreMode::Live | StoreMode::Record(_) => {
                    let inner = Self::connect(b, env)?;
                    match mode {
                        StoreMode::Record(dir) => Box::new(RecordingBackend::new(inner, ReplayStore::new(dir))),
                        _ => inner,
                    }
                }
            };
            reg.insert(backend, b.image_policy);
        }
        Ok(reg)
    }

    fn connect(b: &BackendConfig, env: &dyn Fn(&str) -> Option<String>) -> Result<Box<dyn ChatBackend>, LlmError> {
        Ok(match b.kind {
            BackendKind::Mock => Box::new(Limited::new(
                MockBackend::new(&b.id, b.supports_images).with_script(b.script.clone()),
                b.max_concurrency,
                b.requests_per_minute,
            )),
            BackendKind::Live => {
                let auth = match &b.auth_env {
                    Some(var) => {
                        let key = env(var).filter(|k| !k.is_empty()).ok_or_else(|| {
                            LlmError::Config(format!("backend {} needs credentials in environment variable {var}", b.id))
                        })?;
                        Some((b.auth_header.clone(), format!("{}{key}", b.auth_prefix)))
                    }
                    None => None,
                };
                let http = HttpBackend::new(
                    &b.id,
                    &b.base_url,
                    &b.model,
                    auth,
                    b.supports_images,
                    RetryPolicy {
                        max_retries: b.max_retries,
                        base_delay: Duration::from_secs_f64(b.retry_base_delay_secs.max(0.0)),
                    },
                    Duration::from_secs_f64(b.request_timeout_secs.max(1.0)),
                )?;
                Box::new(Limited::new(http, b.max_concurrency, b.requests_per_minute))
            }
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn supports_images(&self, id: &str) -> bool {
        self.entries.get(id).is_some_and(|e| e.backend.supports_images())
    }

    /// Routes by `req.backend_id`. Returns the request actually sent, after the
    /// image policy, alongside the response.
    pub fn complete(&self, req: &ChatRequest) -> Result<(ChatRequest, ChatResponse), LlmError> {
        req.validate()?;
        let e = self.entries.get(&req.backend_id).ok_or_else(|| LlmError::BackendUnavailable {
            backend: req.backend_id.clone(),
            detail: "not configured".into(),
        })?;
        let sent = apply_image_policy(req, e.backend.supports_images(), e.policy)?;
        let resp = e.backend.complete(&sent)?;
        Ok((sent, resp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{digest, Image, Message, Part};

    const CONFIG: &str = r#"
generators = ["a"]
[[backend]]
id = "a"
kind = "mock"
supports_images = false
image_policy = "drop"
script = { "*" = "from a" }

[[backend]]
id = "b"
model = "gpt-x"
auth_env = "TEST_KEY_B"
"#;

    fn req(id: &str) -> ChatRequest {
        ChatRequest {
            backend_id: id.into(),
            system_prompt: "s".into(),
            messages: vec![Message {
                role: crate::llm::Role::User,
                parts: vec![Part::Text("hi".into()), Part::Image(Image { png: vec![9] })],
            }],
            temperature: 1.0,
            max_output_tokens: 5,
            seed: 0,
            request_tag: "t/generate/0".into(),
        }
    }

    #[test]
    fn parse_and_roles() {
        let cfg = BackendsConfig::from_toml(CONFIG).unwrap();
        assert_eq!(cfg.generator_ids(), vec!["a"]);
        assert_eq!(cfg.baseline_ids(), vec!["a", "b"]);
        assert_eq!(cfg.assessor_ids(), vec!["a", "b"]);
        assert_eq!(cfg.generator_temperature, 1.0);
        assert_eq!(cfg.assessor_temperature, 0.2);
        assert_eq!(cfg.backend[1].max_retries, 3);
        assert_eq!(cfg.backend[1].max_concurrency, 4);
    }

    #[test]
    fn invalid_configs() {
        assert!(BackendsConfig::from_toml("").is_err());
        assert!(BackendsConfig::from_toml("generators=[\"zz\"]\n[[backend]]\nid=\"a\"\nkind=\"mock\"").is_err());
        assert!(BackendsConfig::from_toml("baselines=[\"zz\"]\n[[backend]]\nid=\"a\"\nkind=\"mock\"").is_err());
        assert!(BackendsConfig::from_toml("[[backend]]\nid=\"a\"\nkind=\"mock\"\n[[backend]]\nid=\"a\"\nkind=\"mock\"").is_err());
        assert!(BackendsConfig::from_toml("[[backend]]\nid=\"a\"").is_err());
        assert!(BackendsConfig::from_toml("[[backend]]\nid=\"a\"\nkind=\"mock\"\nbogus=1").is_err());
    }

    #[test]
    fn missing_credential_names_the_variable() {
        let cfg = BackendsConfig::from_toml(CONFIG).unwrap();
        let err = Registry::build(&cfg, &StoreMode::Live, &|_| None).err().unwrap();
        assert!(err.to_string().contains("TEST_KEY_B"), "{err}");
        let dir = tempfile::tempdir().unwrap();
        let err = Registry::build(&cfg, &StoreMode::Record(dir.path().into()), &|_| None).err().unwrap();
        assert!(err.to_string().contains("TEST_KEY_B"));
        assert!(Registry::build(&cfg, &StoreMode::Live, &|_| Some("k".into())).is_ok());
    }

    #[test]
    fn replay_needs_no_credentials_and_drops_images_before_digest() {
        let cfg = BackendsConfig::from_toml(CONFIG).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rec = Registry::build(&cfg, &StoreMode::Record(dir.path().into()), &|_| Some("k".into())).unwrap();
        let (sent, resp) = rec.complete(&req("a")).unwrap();
        assert_eq!(sent.image_count(), 0);
        assert_eq!(resp.text, "from a");
        assert_eq!(resp.digest, digest(&sent));

        let replay = Registry::build(&cfg, &StoreMode::Replay(dir.path().into()), &|_| None).unwrap();
        assert_eq!(replay.complete(&req("a")).unwrap().1, resp);
        assert!(matches!(replay.complete(&req("b")), Err(LlmError::ReplayMiss { .. })));
        assert!(matches!(replay.complete(&req("zz")), Err(LlmError::BackendUnavailable { .. })));
    }

    #[test]
    fn image_error_policy() {
        let mut cfg = BackendsConfig::from_toml(CONFIG).unwrap();
        cfg.backend[0].image_policy = ImagePolicy::Error;
        cfg.backend.truncate(1);
        let reg = Registry::build(&cfg, &StoreMode::Live, &|_| None).unwrap();
        assert_eq!(reg.complete(&req("a")).unwrap_err(), LlmError::ImageUnsupported("a".into()));
    }

    #[test]
    fn script_file_is_merged() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.toml"), "\"Circle/generate/0\" = \"scripted\"\n").unwrap();
        std::fs::write(
            dir.path().join("b.toml"),
            "[[backend]]\nid=\"m\"\nkind=\"mock\"\nscript_file=\"s.toml\"\n",
        )
        .unwrap();
        let cfg = BackendsConfig::load(&dir.path().join("b.toml")).unwrap();
        assert_eq!(cfg.backend[0].script["Circle/generate/0"], "scripted");
    }
}
